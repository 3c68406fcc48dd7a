//! Differentiable computed-tomography operators.
//!
//! The crate provides ray-driven forward projection and voxel-driven
//! backprojection for parallel-beam, fan-beam and cone-beam geometries,
//! the filtered-backprojection (FBP / FDK) pipelines built on top of them,
//! analytic phantoms, projection-matrix trajectories and a set of sinogram
//! artifact simulators. Every projector exposes a vector-Jacobian product
//! through [`autodiff::DifferentiableOp`] so it can sit inside a
//! gradient-based training loop.
//!
//! Coordinates are isocenter-centered: voxel index `i` along an axis of
//! `n` voxels with spacing `s` sits at world coordinate `(i - (n-1)/2) * s`.
//! Array shapes are C-ordered with the last axis fastest, so a 3D volume is
//! `[z, y, x]` and a cone-beam detector image is `[rows, cols]` (`[v, u]`).
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod artifacts;
pub mod autodiff;
pub mod cli;
mod error;
pub mod filters;
pub mod geometry;
pub mod grids;
pub mod phantoms;
pub mod preview;
pub mod projectors;

pub use error::{Error, Result};
pub use geometry::{
    Geometry, GeometryCone3D, GeometryFan2D, GeometryParallel2D, Pose, ProjectionMatrix,
};
pub use grids::{Grid, Sinogram, Volume, VolumeGeometry};
