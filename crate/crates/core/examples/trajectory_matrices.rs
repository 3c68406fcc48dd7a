//! Builds projection matrices for a circular trajectory and for a list of
//! arbitrary poses, exports them as JSON, and projects with the reloaded
//! matrices.
//!
//! cargo run --release --example trajectory_matrices -- [out_dir]

use std::f64::consts::PI;
use std::path::PathBuf;

use ctgrad::geometry::{
    circular_trajectory_3d, load_projection_matrices, save_projection_matrices, trajectory_from_poses, Pose,
};
use ctgrad::phantoms::shepp_logan_3d;
use ctgrad::preview::{save_montage, Panel};
use ctgrad::projectors::{forward_project, SamplingConfig};
use ctgrad::{Geometry, GeometryCone3D, VolumeGeometry};
use nalgebra::{Rotation3, Vector3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&out)?;
    let (sdd, sid) = (1200.0, 750.0);
    let shape = [96, 128];
    let spacing = [2.0, 2.0];

    // short scan: half a turn plus the fan angle
    let circular = circular_trajectory_3d(120, PI + 0.4, sdd, sid, shape, spacing)?;
    save_projection_matrices(out.join("circular.json"), &circular)?;

    // a tilted, wobbling orbit defined pose by pose
    let poses: Vec<Pose> = (0..120)
        .map(|i| {
            let theta = i as f64 * 2.0 * PI / 120.0;
            let wobble = Rotation3::from_axis_angle(&Vector3::x_axis(), 0.2 * (2.0 * theta).sin());
            Pose::circular(theta, sdd, sid).map(|p| p.rotated(&wobble))
        })
        .collect::<Result<_, _>>()?;
    let tilted = trajectory_from_poses(&poses, shape, spacing)?;
    save_projection_matrices(out.join("wobble.json"), &tilted)?;

    let reloaded = load_projection_matrices(out.join("wobble.json"))?;
    let m = &reloaded[30];
    println!("view 30: source {:?}", m.source_position()?.as_slice());
    println!("view 30: isocenter -> pixel {:?}", m.pixel(&Vector3::zeros()));

    let vg = VolumeGeometry::new(vec![64; 3], vec![2.0; 3])?;
    let phantom = shepp_logan_3d(&vg)?;
    let geom: Geometry = GeometryCone3D::new(vg, shape, spacing, reloaded, sdd, sid)?.into();
    let sino = forward_project(&phantom, &geom, &SamplingConfig::default())?;
    let views = [0, 15, 30, 45].map(|i| Panel::from_projection(&sino, i));
    save_montage(out.join("wobble_projections.png"), &views, 4, 4)?;
    Ok(())
}
