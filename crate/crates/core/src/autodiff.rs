//! Vector-Jacobian products for the CT operators and a finite-difference
//! gradient checker.
//!
//! Every operator here is linear in its grid input, so its VJP does not
//! depend on the linearization point. The projector VJPs use the paired
//! discrete operator: the gradient of the ray-driven forward projection is
//! the voxel-driven backprojection without FDK weighting, and vice versa.
//! Those pairs are only approximately transposes of each other. Filtering
//! and the FBP pipelines have exact transposes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filters::{
    fbp, fbp_backproject_stage_transpose, fbp_filter_stage_transpose, fft_filter, Filter1D,
    FilterKind,
};
use crate::geometry::Geometry;
use crate::grids::{Sinogram, Volume};
use crate::projectors::{back_project, forward_project, SamplingConfig};

/// A linear operator on flat `f32` buffers together with its VJP.
pub trait DifferentiableOp: Sync {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn forward(&self, x: &[f32]) -> Result<Vec<f32>>;
    /// Gradient of `⟨cotangent, forward(x)⟩` with respect to `x`, at `x = at`.
    fn vjp(&self, at: &[f32], cotangent: &[f32]) -> Result<Vec<f32>>;
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch {
            expected: vec![expected],
            actual: vec![actual],
        });
    }
    Ok(())
}

fn volume_from(geom: &Geometry, data: &[f32]) -> Result<Volume> {
    Volume::from_data(geom.volume().clone(), data.to_vec())
}

fn sinogram_from(geom: &Geometry, data: &[f32]) -> Result<Sinogram> {
    Sinogram::from_data(
        geom.n_projections(),
        geom.detector_shape(),
        geom.detector_spacing(),
        data.to_vec(),
    )
}

/// Gradient of the forward projection: the backprojection of the cotangent.
pub fn vjp_forward_projection(geom: &Geometry, cotangent: &Sinogram) -> Result<Volume> {
    back_project(cotangent, geom)
}

/// Gradient of the backprojection: the forward projection of the cotangent.
pub fn vjp_back_projection(
    geom: &Geometry,
    cfg: &SamplingConfig,
    cotangent: &Volume,
) -> Result<Sinogram> {
    forward_project(cotangent, geom, cfg)
}

/// Filtering with a real symmetric filter is self-adjoint.
pub fn vjp_fft_filter(filter: &Filter1D, cotangent: &Sinogram) -> Result<Sinogram> {
    fft_filter(cotangent, filter)
}

/// Exact transpose of [`fbp`] applied to a volume cotangent.
pub fn vjp_fbp(geom: &Geometry, kind: FilterKind, cotangent: &Volume) -> Result<Sinogram> {
    geom.check_volume(cotangent)?;
    let spread = fbp_backproject_stage_transpose(cotangent, geom)?;
    fbp_filter_stage_transpose(&spread, geom, kind)
}

/// Ray-driven forward projection, volume → sinogram.
#[derive(Debug, Clone)]
pub struct ForwardProjection {
    pub geometry: Geometry,
    pub sampling: SamplingConfig,
}

impl DifferentiableOp for ForwardProjection {
    fn input_len(&self) -> usize {
        self.geometry.volume().len()
    }
    fn output_len(&self) -> usize {
        self.geometry.empty_sinogram().data().len()
    }
    fn forward(&self, x: &[f32]) -> Result<Vec<f32>> {
        let v = volume_from(&self.geometry, x)?;
        Ok(forward_project(&v, &self.geometry, &self.sampling)?.into_data())
    }
    fn vjp(&self, at: &[f32], cotangent: &[f32]) -> Result<Vec<f32>> {
        check_len(self.input_len(), at.len())?;
        let c = sinogram_from(&self.geometry, cotangent)?;
        Ok(vjp_forward_projection(&self.geometry, &c)?.into_data())
    }
}

/// Voxel-driven backprojection (no FDK weighting), sinogram → volume.
#[derive(Debug, Clone)]
pub struct BackProjection {
    pub geometry: Geometry,
    /// sampling of the forward projection used as VJP
    pub sampling: SamplingConfig,
}

impl DifferentiableOp for BackProjection {
    fn input_len(&self) -> usize {
        self.geometry.empty_sinogram().data().len()
    }
    fn output_len(&self) -> usize {
        self.geometry.volume().len()
    }
    fn forward(&self, x: &[f32]) -> Result<Vec<f32>> {
        let s = sinogram_from(&self.geometry, x)?;
        Ok(back_project(&s, &self.geometry)?.into_data())
    }
    fn vjp(&self, at: &[f32], cotangent: &[f32]) -> Result<Vec<f32>> {
        check_len(self.input_len(), at.len())?;
        let c = volume_from(&self.geometry, cotangent)?;
        Ok(vjp_back_projection(&self.geometry, &self.sampling, &c)?.into_data())
    }
}

/// Row-wise FFT filtering of a sinogram with a fixed layout.
#[derive(Debug, Clone)]
pub struct FilterOp {
    pub filter: Filter1D,
    pub n_projections: usize,
    pub detector_shape: Vec<usize>,
    pub detector_spacing: Vec<f64>,
}

impl FilterOp {
    fn wrap(&self, data: &[f32]) -> Result<Sinogram> {
        Sinogram::from_data(
            self.n_projections,
            self.detector_shape.clone(),
            self.detector_spacing.clone(),
            data.to_vec(),
        )
    }
}

impl DifferentiableOp for FilterOp {
    fn input_len(&self) -> usize {
        self.n_projections * self.detector_shape.iter().product::<usize>()
    }
    fn output_len(&self) -> usize {
        self.input_len()
    }
    fn forward(&self, x: &[f32]) -> Result<Vec<f32>> {
        Ok(fft_filter(&self.wrap(x)?, &self.filter)?.into_data())
    }
    fn vjp(&self, at: &[f32], cotangent: &[f32]) -> Result<Vec<f32>> {
        check_len(self.input_len(), at.len())?;
        Ok(vjp_fft_filter(&self.filter, &self.wrap(cotangent)?)?.into_data())
    }
}

/// Full FBP / FDK pipeline, sinogram → volume.
#[derive(Debug, Clone)]
pub struct FbpOp {
    pub geometry: Geometry,
    pub filter_kind: FilterKind,
}

impl DifferentiableOp for FbpOp {
    fn input_len(&self) -> usize {
        self.geometry.empty_sinogram().data().len()
    }
    fn output_len(&self) -> usize {
        self.geometry.volume().len()
    }
    fn forward(&self, x: &[f32]) -> Result<Vec<f32>> {
        let s = sinogram_from(&self.geometry, x)?;
        Ok(fbp(&s, &self.geometry, self.filter_kind)?.into_data())
    }
    fn vjp(&self, at: &[f32], cotangent: &[f32]) -> Result<Vec<f32>> {
        check_len(self.input_len(), at.len())?;
        let c = volume_from(&self.geometry, cotangent)?;
        Ok(vjp_fbp(&self.geometry, self.filter_kind, &c)?.into_data())
    }
}

/// Outcome of one randomized directional-derivative comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckTrial {
    /// `⟨y, (f(x + εd) - f(x - εd)) / 2ε⟩`
    pub finite_difference: f64,
    /// `⟨vjp(x, y), d⟩`
    pub analytic: f64,
    pub relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub trials: Vec<GradCheckTrial>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        !self.trials.is_empty() && self.trials.iter().all(|t| t.passed)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.trials.iter().map(|t| t.relative_error).fold(0.0, f64::max)
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

/// [`grad_check_seeded`] with seed 0.
pub fn grad_check(
    op: &dyn DifferentiableOp,
    trials: usize,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    grad_check_seeded(op, trials, epsilon, tolerance, 0)
}

/// Compares central finite differences against the VJP along random
/// directions.
///
/// The linearization point `x`, direction `d` and cotangent `y` are drawn
/// uniformly from `[0, 1)`. Non-negative draws keep `⟨y, J d⟩` well away
/// from zero, so the relative error measures the operator pairing rather
/// than cancellation noise.
pub fn grad_check_seeded(
    op: &dyn DifferentiableOp,
    trials: usize,
    epsilon: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) || !(tolerance > 0.0) {
        return Err(Error::invalid("epsilon and tolerance must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.random::<f32>()).collect() };
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let x = draw(op.input_len());
        let d = draw(op.input_len());
        let y = draw(op.output_len());
        let plus: Vec<f32> = x.iter().zip(&d).map(|(a, b)| a + epsilon as f32 * b).collect();
        let minus: Vec<f32> = x.iter().zip(&d).map(|(a, b)| a - epsilon as f32 * b).collect();
        let fp = op.forward(&plus)?;
        let fm = op.forward(&minus)?;
        let fd = (dot(&y, &fp) - dot(&y, &fm)) / (2.0 * epsilon);
        // project the gradient on the perturbation actually applied after
        // rounding the inputs to f32, which is 2εd up to rounding
        let g = op.vjp(&x, &y)?;
        let an = g
            .iter()
            .zip(plus.iter().zip(&minus))
            .map(|(gi, (p, m))| *gi as f64 * (*p as f64 - *m as f64))
            .sum::<f64>()
            / (2.0 * epsilon);
        let denom = fd.abs().max(an.abs()).max(f64::MIN_POSITIVE);
        let relative_error = (fd - an).abs() / denom;
        out.push(GradCheckTrial {
            finite_difference: fd,
            analytic: an,
            relative_error,
            passed: relative_error <= tolerance,
        });
    }
    Ok(GradCheckReport {
        tolerance,
        trials: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::ramp_filter;
    use crate::geometry::{circular_trajectory_2d, GeometryParallel2D};
    use crate::grids::VolumeGeometry;
    use std::f64::consts::PI;

    fn par_geom(n: usize) -> Geometry {
        let vg = VolumeGeometry::new(vec![n, n], vec![1.0, 1.0]).unwrap();
        GeometryParallel2D::new(vg, n + n / 2, 1.0, circular_trajectory_2d(30, PI).unwrap())
            .unwrap()
            .into()
    }

    struct Doubled<T>(T);
    impl<T: DifferentiableOp> DifferentiableOp for Doubled<T> {
        fn input_len(&self) -> usize {
            self.0.input_len()
        }
        fn output_len(&self) -> usize {
            self.0.output_len()
        }
        fn forward(&self, x: &[f32]) -> Result<Vec<f32>> {
            self.0.forward(x)
        }
        fn vjp(&self, at: &[f32], c: &[f32]) -> Result<Vec<f32>> {
            Ok(self.0.vjp(at, c)?.into_iter().map(|v| 2.0 * v).collect())
        }
    }

    #[test]
    fn zero_cotangent_zero_gradient() {
        let g = par_geom(16);
        let op = ForwardProjection {
            geometry: g.clone(),
            sampling: SamplingConfig::default(),
        };
        let x = vec![0.3; op.input_len()];
        let grad = op.vjp(&x, &vec![0.0; op.output_len()]).unwrap();
        assert!(grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn vjp_delegates_bit_identically() {
        let g = par_geom(16);
        let op = ForwardProjection {
            geometry: g.clone(),
            sampling: SamplingConfig::default(),
        };
        let y: Vec<f32> = (0..op.output_len()).map(|i| (i % 7) as f32).collect();
        let grad = op.vjp(&vec![0.0; op.input_len()], &y).unwrap();
        let direct = back_project(&sinogram_from(&g, &y).unwrap(), &g).unwrap();
        assert_eq!(grad, direct.into_data());
    }

    #[test]
    fn vjp_independent_of_linearization_point() {
        let g = par_geom(16);
        let op = BackProjection {
            geometry: g,
            sampling: SamplingConfig::default(),
        };
        let y: Vec<f32> = (0..op.output_len()).map(|i| (i % 5) as f32).collect();
        let a = op.vjp(&vec![0.0; op.input_len()], &y).unwrap();
        let b = op.vjp(&vec![7.0; op.input_len()], &y).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn filter_op_is_self_adjoint_and_passes() {
        let op = FilterOp {
            filter: ramp_filter(24, 1.0).unwrap(),
            n_projections: 6,
            detector_shape: vec![24],
            detector_spacing: vec![1.0],
        };
        let r = grad_check(&op, 5, 1e-3, 1e-4).unwrap();
        assert!(r.passed(), "{:?}", r);
    }

    #[test]
    fn corrupted_vjp_fails() {
        let op = Doubled(ForwardProjection {
            geometry: par_geom(16),
            sampling: SamplingConfig::default(),
        });
        let r = grad_check(&op, 3, 1e-3, 1e-3).unwrap();
        assert!(!r.passed());
        assert!(r.trials.iter().all(|t| t.relative_error > 0.4));
    }

    #[test]
    fn fbp_vjp_is_exact_transpose() {
        let op = FbpOp {
            geometry: par_geom(16),
            filter_kind: FilterKind::SheppLogan,
        };
        let r = grad_check(&op, 3, 1e-3, 1e-4).unwrap();
        assert!(r.passed(), "{:?}", r);
    }

    #[test]
    fn wrong_lengths_rejected() {
        let op = ForwardProjection {
            geometry: par_geom(16),
            sampling: SamplingConfig::default(),
        };
        assert!(op.forward(&[0.0; 3]).is_err());
        assert!(op.vjp(&[0.0; 3], &vec![0.0; op.output_len()]).is_err());
    }
}
