//! Finite-difference check of every differentiable operator in all three
//! geometries.
//!
//! cargo run --release --example grad_check

use std::f64::consts::{PI, TAU};

use ctgrad::autodiff::{grad_check, BackProjection, DifferentiableOp, FbpOp, FilterOp, ForwardProjection};
use ctgrad::filters::{make_filter, FilterKind};
use ctgrad::geometry::circular_trajectory_2d;
use ctgrad::projectors::SamplingConfig;
use ctgrad::{Geometry, GeometryCone3D, GeometryFan2D, GeometryParallel2D, VolumeGeometry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sampling = SamplingConfig::default();
    let square = VolumeGeometry::new(vec![32, 32], vec![1.0, 1.0])?;
    let cube = VolumeGeometry::new(vec![24; 3], vec![1.0; 3])?;
    let geometries: Vec<(&str, Geometry)> = vec![
        ("parallel", GeometryParallel2D::new(square.clone(), 48, 1.0, circular_trajectory_2d(60, PI)?)?.into()),
        ("fan", GeometryFan2D::new(square, 64, 1.2, circular_trajectory_2d(60, TAU)?, 300.0, 180.0)?.into()),
        ("cone", GeometryCone3D::circular(cube, [24, 40], [1.5, 1.5], 20, TAU, 400.0, 250.0)?.into()),
    ];

    for (name, g) in &geometries {
        let ops: Vec<(&str, Box<dyn DifferentiableOp>)> = vec![
            ("forward", Box::new(ForwardProjection { geometry: g.clone(), sampling })),
            ("back", Box::new(BackProjection { geometry: g.clone(), sampling })),
            ("fbp", Box::new(FbpOp { geometry: g.clone(), filter_kind: FilterKind::SheppLogan })),
        ];
        for (op_name, op) in &ops {
            let report = grad_check(op.as_ref(), 5, 1e-3, 1e-3)?;
            println!("{name:>8} {op_name:>8}: max rel err {:.2e}  {}", report.max_relative_error(), verdict(report.passed()));
        }
    }

    for kind in [FilterKind::Ramp, FilterKind::SheppLogan, FilterKind::Cosine] {
        let op = FilterOp {
            filter: make_filter(kind, 48, 1.0)?,
            n_projections: 30,
            detector_shape: vec![48],
            detector_spacing: vec![1.0],
        };
        let report = grad_check(&op, 5, 1e-3, 1e-4)?;
        println!("{:>8} {:>8}: max rel err {:.2e}  {}", "filter", format!("{kind:?}"), report.max_relative_error(), verdict(report.passed()));
    }
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok { "ok" } else { "FAILED" }
}
