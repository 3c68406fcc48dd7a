//! Applies each artifact simulator to a cone-beam sinogram of the 3D
//! Shepp-Logan phantom and reconstructs every variant.
//!
//! Top row: clean and degraded projections. Bottom row: central slice of
//! each FDK reconstruction.
//!
//! cargo run --release --example artifact_gallery -- [out_dir]

use std::f64::consts::TAU;
use std::path::PathBuf;

use ctgrad::artifacts::{
    add_detector_jitter, add_gantry_motion_blur, add_gaussian_noise, add_poisson_noise, add_ring_artifact,
    DetectorAxis, PoissonMode, RingMode,
};
use ctgrad::filters::{fbp, FilterKind};
use ctgrad::phantoms::shepp_logan_3d;
use ctgrad::preview::{save_montage, Panel};
use ctgrad::projectors::{forward_project, SamplingConfig};
use ctgrad::{Geometry, GeometryCone3D, Sinogram, VolumeGeometry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&out)?;

    let vg = VolumeGeometry::new(vec![64; 3], vec![2.0; 3])?;
    let geom: Geometry = GeometryCone3D::circular(vg.clone(), [100, 150], [4.0, 4.0], 360, TAU, 1200.0, 750.0)?.into();
    let mut phantom = shepp_logan_3d(&vg)?;
    // scale to attenuation per mm so transmission noise is meaningful
    phantom.data_mut().iter_mut().for_each(|v| *v *= 0.02);
    let clean = forward_project(&phantom, &geom, &SamplingConfig::default())?;

    let variants: Vec<(&str, Sinogram)> = vec![
        ("noise free", clean.clone()),
        ("jitter", add_detector_jitter(&clean, 3, DetectorAxis::U, 1)?),
        ("poisson", add_poisson_noise(&clean, 2e3, PoissonMode::Transmission, 2)?),
        ("gaussian", add_gaussian_noise(&clean, 0.0, 0.05, 3)?),
        ("ring", add_ring_artifact(&clean, &[80, 90, 101], 0..360, RingMode::Scale(0.7))?),
        ("blur", add_gantry_motion_blur(&clean, &geom, 7)?),
    ];

    let mut top = Vec::new();
    let mut bottom = Vec::new();
    for (name, sino) in &variants {
        let reco = fbp(sino, &geom, FilterKind::SheppLogan)?;
        let err = reco.data().iter().zip(phantom.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>()
            / reco.data().len() as f64;
        println!("{name:>10}: mean |reco - phantom| = {err:.2e}");
        top.push(Panel::from_projection(sino, 0));
        bottom.push(Panel::from_volume(&reco));
    }
    top.extend(bottom);
    save_montage(out.join("artifacts.png"), &top, variants.len(), 3)?;
    Ok(())
}
