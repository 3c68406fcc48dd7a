//! Iterative reconstruction by gradient descent on the least-squares data
//! term `0.5 · ||A x - b||²`, using the forward projector and its VJP.
//!
//! Starts from the FBP image and compares both against the phantom. The
//! step size comes from a few power iterations on `Aᵀ A`.
//!
//! cargo run --release --example gradient_descent -- [out_dir]

use std::f64::consts::TAU;
use std::path::PathBuf;

use ctgrad::autodiff::{DifferentiableOp, ForwardProjection};
use ctgrad::filters::{fbp, FilterKind};
use ctgrad::geometry::circular_trajectory_2d;
use ctgrad::phantoms::shepp_logan_2d;
use ctgrad::preview::{save_montage, Panel};
use ctgrad::projectors::SamplingConfig;
use ctgrad::{Geometry, GeometryFan2D, Volume, VolumeGeometry};

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt()
}

fn rmse(a: &[f32], b: &[f32]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
    (s / a.len() as f64).sqrt()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&out)?;

    let vg = VolumeGeometry::new(vec![96, 96], vec![2.0, 2.0])?;
    // few views: FBP streaks, the iterative solution should not
    let geom: Geometry = GeometryFan2D::new(vg.clone(), 160, 2.0, circular_trajectory_2d(48, TAU)?, 1200.0, 750.0)?.into();
    let phantom = shepp_logan_2d(&vg)?;
    let op = ForwardProjection { geometry: geom.clone(), sampling: SamplingConfig::default() };
    let b = op.forward(phantom.data())?;

    let mut v: Vec<f32> = vec![1.0; op.input_len()];
    let mut lipschitz = 0.0;
    for _ in 0..20 {
        let av = op.forward(&v)?;
        let atav = op.vjp(&v, &av)?;
        lipschitz = norm(&atav) / norm(&v);
        let n = norm(&atav) as f32;
        v = atav.iter().map(|x| x / n).collect();
    }
    let step = (1.0 / lipschitz) as f32;
    println!("step size 1/L = {step:.3e}");

    let sino = ctgrad::Sinogram::from_data(geom.n_projections(), geom.detector_shape(), geom.detector_spacing(), b.clone())?;
    let start = fbp(&sino, &geom, FilterKind::SheppLogan)?;
    println!("fbp rmse {:.4}", rmse(start.data(), phantom.data()));

    let mut x = start.data().to_vec();
    for it in 1..=60 {
        let residual: Vec<f32> = op.forward(&x)?.iter().zip(&b).map(|(p, q)| p - q).collect();
        let grad = op.vjp(&x, &residual)?;
        x.iter_mut().zip(&grad).for_each(|(xi, g)| *xi = (*xi - step * g).max(0.0));
        if it % 10 == 0 {
            println!("iter {it:3}: residual {:.4e}  rmse {:.4}", norm(&residual), rmse(&x, phantom.data()));
        }
    }

    let result = Volume::from_data(vg, x)?;
    let panels = [&phantom, &start, &result].map(Panel::from_volume);
    save_montage(out.join("gradient_descent.png"), &panels, 3, 4)?;
    Ok(())
}
