//! Cone-beam FDK of the 3D Shepp-Logan phantom on a circular trajectory,
//! written step by step: project, filter, backproject.
//!
//! The default run keeps the physical field of view and detector extent of
//! a 256^3 / 400x600 setup but samples them 4x coarser. Pass `--full` for
//! the full-size problem (slow on few cores).
//!
//! cargo run --release --example cone_fdk -- [--full] [out_dir]

use std::f64::consts::TAU;
use std::path::PathBuf;
use std::time::Instant;

use ctgrad::filters::{fbp_backproject_stage, fbp_filter_stage, FilterKind};
use ctgrad::grids::write_volume;
use ctgrad::phantoms::shepp_logan_3d;
use ctgrad::preview::{save_montage, Panel};
use ctgrad::projectors::{forward_project, SamplingConfig};
use ctgrad::{Geometry, GeometryCone3D, VolumeGeometry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let full = args.iter().any(|a| a == "--full");
    let out = PathBuf::from(args.iter().find(|a| !a.starts_with("--")).cloned().unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&out)?;

    let k = if full { 1 } else { 4 };
    let volume_shape = vec![256 / k; 3];
    let volume_spacing = vec![0.5 * k as f64; 3];
    let detector_shape = [400 / k, 600 / k];
    let detector_spacing = [k as f64, k as f64];
    let number_of_projections = 360;
    let angular_range = TAU;
    let sdd = 1200.0;
    let sid = 750.0;

    let vg = VolumeGeometry::new(volume_shape, volume_spacing)?;
    let geom: Geometry = GeometryCone3D::circular(
        vg.clone(),
        detector_shape,
        detector_spacing,
        number_of_projections,
        angular_range,
        sdd,
        sid,
    )?
    .into();
    let phantom = shepp_logan_3d(&vg)?;

    let t = Instant::now();
    let sinogram = forward_project(&phantom, &geom, &SamplingConfig::default())?;
    println!("projection: {:.2?}", t.elapsed());

    let t = Instant::now();
    let filtered = fbp_filter_stage(&sinogram, &geom, FilterKind::SheppLogan)?;
    println!("filtering: {:.2?}", t.elapsed());

    let t = Instant::now();
    let reco = fbp_backproject_stage(&filtered, &geom)?;
    println!("backprojection: {:.2?}", t.elapsed());

    write_volume(&reco, out.join("fdk_reco"))?;
    let panels = [
        Panel::from_volume(&phantom),
        Panel::from_projection(&sinogram, 0),
        Panel::from_projection(&filtered, 0),
        Panel::from_volume(&reco),
    ];
    save_montage(out.join("cone_fdk.png"), &panels, 4, 4)?;
    Ok(())
}
