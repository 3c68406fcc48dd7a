//! Parallel-beam projection and FBP of the Shepp-Logan phantom with each
//! filter kind.
//!
//! cargo run --release --example parallel_fbp -- [out_dir]

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use ctgrad::filters::{fbp, FilterKind};
use ctgrad::geometry::circular_trajectory_2d;
use ctgrad::phantoms::shepp_logan_2d;
use ctgrad::preview::{save_montage, Panel};
use ctgrad::projectors::{forward_project, SamplingConfig};
use ctgrad::{Geometry, GeometryParallel2D, VolumeGeometry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&out)?;

    let vg = VolumeGeometry::new(vec![256, 256], vec![1.0, 1.0])?;
    let geom: Geometry = GeometryParallel2D::new(vg.clone(), 384, 1.0, circular_trajectory_2d(360, PI)?)?.into();
    let phantom = shepp_logan_2d(&vg)?;

    let t = Instant::now();
    let sino = forward_project(&phantom, &geom, &SamplingConfig::default())?;
    println!("forward projection: {:.2?}", t.elapsed());

    let mut panels = vec![Panel::from_volume(&phantom), Panel::from_sinogram(&sino)];
    for kind in [FilterKind::Ramp, FilterKind::SheppLogan, FilterKind::Cosine] {
        let t = Instant::now();
        let rec = fbp(&sino, &geom, kind)?;
        let rmse = (rec.data().iter().zip(phantom.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>()
            / rec.data().len() as f64)
            .sqrt();
        println!("{kind:?}: {:.2?}, RMSE {rmse:.4}", t.elapsed());
        panels.push(Panel::from_volume(&rec));
    }
    save_montage(out.join("parallel_fbp.png"), &panels, 5, 4)?;
    Ok(())
}
