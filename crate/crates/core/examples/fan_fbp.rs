//! Fan-beam FBP, compared against the parallel-beam reconstruction of the
//! same phantom.
//!
//! cargo run --release --example fan_fbp -- [out_dir]

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use ctgrad::filters::{fbp, FilterKind};
use ctgrad::geometry::circular_trajectory_2d;
use ctgrad::phantoms::shepp_logan_2d;
use ctgrad::preview::{save_montage, Panel};
use ctgrad::projectors::{forward_project, SamplingConfig};
use ctgrad::{Geometry, GeometryFan2D, GeometryParallel2D, VolumeGeometry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&out)?;

    let vg = VolumeGeometry::new(vec![256, 256], vec![0.5, 0.5])?;
    let phantom = shepp_logan_2d(&vg)?;
    let cfg = SamplingConfig::default();

    // sdd / sid as in a typical C-arm; 1 mm pixels are 0.625 mm at the isocenter
    let fan: Geometry = GeometryFan2D::new(vg.clone(), 400, 1.0, circular_trajectory_2d(360, TAU)?, 1200.0, 750.0)?.into();
    let par: Geometry = GeometryParallel2D::new(vg.clone(), 384, 0.5, circular_trajectory_2d(360, PI)?)?.into();

    let fan_sino = forward_project(&phantom, &fan, &cfg)?;
    let fan_rec = fbp(&fan_sino, &fan, FilterKind::SheppLogan)?;
    let par_rec = fbp(&forward_project(&phantom, &par, &cfg)?, &par, FilterKind::SheppLogan)?;

    let rmse = (fan_rec.data().iter().zip(par_rec.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>()
        / fan_rec.data().len() as f64)
        .sqrt();
    println!("fan vs parallel RMSE: {rmse:.4}");

    let panels = [
        Panel::from_sinogram(&fan_sino),
        Panel::from_volume(&fan_rec),
        Panel::from_volume(&par_rec),
    ];
    save_montage(out.join("fan_fbp.png"), &panels, 3, 4)?;
    Ok(())
}
