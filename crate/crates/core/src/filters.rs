//! Reconstruction filters, FFT filtering, cosine pre-weighting and the
//! FBP / FDK pipelines.
//!
//! The ramp filter is the DFT of the band-limited spatial kernel
//! `h[0] = 1/(4Δs²)`, `h[n] = -1/(π n Δs)²` for odd `n`, zero for even `n`,
//! laid out cyclically on the padded length. Because the kernel is
//! truncated at half the padded length its DC bin is small but not zero;
//! it is kept as computed so the filter is exactly the DFT of `h`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometryCone3D, GeometryFan2D, GeometryParallel2D};
use crate::grids::{Sinogram, Volume};
use crate::projectors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Ramp,
    SheppLogan,
    Cosine,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" => Ok(Self::Ramp),
            "shepp_logan" => Ok(Self::SheppLogan),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::invalid(format!("unknown filter kind {other:?}"))),
        }
    }
}

/// Frequency-domain filter weights (the diagonal of K), one per padded bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter1D {
    weights: Vec<f64>,
    detector_spacing: f64,
}

impl Filter1D {
    /// Custom filter; `weights[k]` multiplies DFT bin `k` of the padded row.
    pub fn new(weights: Vec<f64>, detector_spacing: f64) -> Result<Self> {
        if weights.len() < 2 || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("filter weights must be finite, at least 2"));
        }
        if !(detector_spacing > 0.0 && detector_spacing.is_finite()) {
            return Err(Error::invalid("filter spacing must be positive"));
        }
        Ok(Self {
            weights,
            detector_spacing,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_pad(&self) -> usize {
        self.weights.len()
    }

    pub fn detector_spacing(&self) -> f64 {
        self.detector_spacing
    }
}

/// Padded length used for a detector row of `width` pixels.
pub fn padded_len(width: usize) -> usize {
    (2 * width).next_power_of_two()
}

/// Band-limited ramp kernel laid out cyclically on `n_pad` samples.
pub fn ramp_kernel(n_pad: usize, spacing: f64) -> Vec<f64> {
    let mut h = vec![0.0; n_pad];
    h[0] = 1.0 / (4.0 * spacing * spacing);
    for n in (1..=n_pad / 2).step_by(2) {
        let v = -1.0 / (PI * n as f64 * spacing).powi(2);
        h[n] = v;
        h[n_pad - n] = v;
    }
    h
}

fn check_width(width: usize, spacing: f64) -> Result<()> {
    if width < 2 {
        return Err(Error::invalid(format!("filter width must be >= 2, got {width}")));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid(format!("filter spacing must be positive, got {spacing}")));
    }
    Ok(())
}

pub fn ramp_filter(width: usize, spacing: f64) -> Result<Filter1D> {
    check_width(width, spacing)?;
    let n = padded_len(width);
    let mut buf: Vec<Complex<f64>> = ramp_kernel(n, spacing)
        .into_iter()
        .map(|v| Complex::new(v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut weights: Vec<f64> = buf.iter().map(|c| c.re.max(0.0)).collect();
    // the kernel is even; make the weights exactly so despite FFT round-off
    for k in 1..n / 2 {
        weights[n - k] = weights[k];
    }
    Filter1D::new(weights, spacing)
}

/// Frequency of bin `k` relative to twice the Nyquist frequency, in `[0, 1/2]`.
fn relative_frequency(k: usize, n: usize) -> f64 {
    k.min(n - k) as f64 / n as f64
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Ramp apodized by `sinc(f / (2 f_N))`.
pub fn shepp_logan_filter(width: usize, spacing: f64) -> Result<Filter1D> {
    let ramp = ramp_filter(width, spacing)?;
    let n = ramp.n_pad();
    let weights = ramp
        .weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * sinc(relative_frequency(k, n)))
        .collect();
    Filter1D::new(weights, spacing)
}

/// Ramp apodized by `cos(π f / (2 f_N))`.
pub fn cosine_filter(width: usize, spacing: f64) -> Result<Filter1D> {
    let ramp = ramp_filter(width, spacing)?;
    let n = ramp.n_pad();
    let weights = ramp
        .weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * (PI * relative_frequency(k, n)).cos())
        .collect();
    Filter1D::new(weights, spacing)
}

pub fn make_filter(kind: FilterKind, width: usize, spacing: f64) -> Result<Filter1D> {
    match kind {
        FilterKind::Ramp => ramp_filter(width, spacing),
        FilterKind::SheppLogan => shepp_logan_filter(width, spacing),
        FilterKind::Cosine => cosine_filter(width, spacing),
    }
}

/// Filters every detector row (the `u` axis) of `sino`:
/// `real(IFFT(FFT(pad(row)) · weights)) · Δs`, truncated to the row width.
pub fn fft_filter(sino: &Sinogram, filter: &Filter1D) -> Result<Sinogram> {
    let width = *sino.detector_shape().last().expect("detector has at least one axis");
    let du = *sino.detector_spacing().last().expect("detector has at least one axis");
    let n = filter.n_pad();
    if n < 2 * width {
        return Err(Error::invalid(format!(
            "filter length {n} is shorter than twice the detector width {width}"
        )));
    }
    if (filter.detector_spacing() - du).abs() > 1e-9 * du {
        return Err(Error::invalid(format!(
            "filter spacing {} does not match detector spacing {du}",
            filter.detector_spacing()
        )));
    }
    let mut planner = FftPlanner::new();
    let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(n);
    let inv: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(n);
    let scale = du / n as f64;
    let weights = filter.weights();
    let mut out = sino.zeros_like();
    out.data_mut()
        .par_chunks_mut(width)
        .zip(sino.data().par_chunks(width))
        .for_each_init(
            || vec![Complex::new(0.0, 0.0); n],
            |buf, (dst, src)| {
                for (b, &v) in buf.iter_mut().zip(src) {
                    *b = Complex::new(v as f64, 0.0);
                }
                buf[width..].fill(Complex::new(0.0, 0.0));
                fwd.process(buf);
                for (b, w) in buf.iter_mut().zip(weights) {
                    *b *= *w;
                }
                inv.process(buf);
                for (d, b) in dst.iter_mut().zip(buf.iter()) {
                    *d = (b.re * scale) as f32;
                }
            },
        );
    Ok(out)
}

fn weight_rows(sino: &Sinogram, weights: &[f64]) -> Sinogram {
    let mut out = sino.zeros_like();
    out.data_mut()
        .par_chunks_mut(weights.len())
        .zip(sino.data().par_chunks(weights.len()))
        .for_each(|(dst, src)| {
            for ((d, &s), w) in dst.iter_mut().zip(src).zip(weights) {
                *d = (s as f64 * w) as f32;
            }
        });
    out
}

/// Per-pixel cone-beam weights `sdd / sqrt(sdd² + u² + v²)`, row-major `[rows, cols]`.
pub fn cone_preweights(geom: &GeometryCone3D) -> Vec<f64> {
    let [rows, cols] = geom.detector_shape();
    let [dv, du] = geom.detector_spacing();
    let sdd = geom.sdd();
    let mut w = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let v = (r as f64 - (rows as f64 - 1.0) * 0.5) * dv;
        for c in 0..cols {
            let u = (c as f64 - (cols as f64 - 1.0) * 0.5) * du;
            w.push(sdd / (sdd * sdd + u * u + v * v).sqrt());
        }
    }
    w
}

/// Fan-beam weights `sdd / sqrt(sdd² + u²)`.
pub fn fan_preweights(geom: &GeometryFan2D) -> Vec<f64> {
    let n = geom.detector_width();
    let sdd = geom.sdd();
    (0..n)
        .map(|c| {
            let u = (c as f64 - (n as f64 - 1.0) * 0.5) * geom.detector_spacing();
            sdd / (sdd * sdd + u * u).sqrt()
        })
        .collect()
}

pub fn cosine_preweight_cone(sino: &Sinogram, geom: &GeometryCone3D) -> Result<Sinogram> {
    Geometry::Cone3D(geom.clone()).check_sinogram(sino)?;
    Ok(weight_rows(sino, &cone_preweights(geom)))
}

pub fn cosine_preweight_fan(sino: &Sinogram, geom: &GeometryFan2D) -> Result<Sinogram> {
    Geometry::Fan2D(geom.clone()).check_sinogram(sino)?;
    Ok(weight_rows(sino, &fan_preweights(geom)))
}

/// Pre-weights of the pipeline for `geom` (`None` for parallel beam).
pub(crate) fn preweights(geom: &Geometry) -> Option<Vec<f64>> {
    match geom {
        Geometry::Parallel2D(_) => None,
        Geometry::Fan2D(g) => Some(fan_preweights(g)),
        Geometry::Cone3D(g) => Some(cone_preweights(g)),
    }
}

/// Final scale of the backprojection stage.
///
/// `π / n` is the angular weight of a full scan. Divergent-beam filtering
/// runs in physical detector coordinates, which are magnified by
/// `sdd / sid` relative to the isocenter; the extra factor undoes that.
pub fn fbp_scale(geom: &Geometry) -> f64 {
    let angular = PI / geom.n_projections() as f64;
    match geom {
        Geometry::Parallel2D(_) => angular,
        Geometry::Fan2D(g) => angular * g.sdd() / g.sid(),
        Geometry::Cone3D(g) => angular * g.sdd() / g.sid(),
    }
}

/// Filter used by the pipeline for `geom`.
pub fn pipeline_filter(geom: &Geometry, kind: FilterKind) -> Result<Filter1D> {
    let width = *geom.detector_shape().last().expect("detector has an axis");
    let spacing = *geom.detector_spacing().last().expect("detector has an axis");
    make_filter(kind, width, spacing)
}

/// First pipeline stage: cosine pre-weighting (divergent beams) and
/// row-wise filtering.
pub fn fbp_filter_stage(sino: &Sinogram, geom: &Geometry, kind: FilterKind) -> Result<Sinogram> {
    geom.check_sinogram(sino)?;
    let filter = pipeline_filter(geom, kind)?;
    match preweights(geom) {
        None => fft_filter(sino, &filter),
        Some(w) => fft_filter(&weight_rows(sino, &w), &filter),
    }
}

/// Second pipeline stage: reconstruction backprojection (distance-weighted
/// for divergent beams) times [`fbp_scale`].
pub fn fbp_backproject_stage(filtered: &Sinogram, geom: &Geometry) -> Result<Volume> {
    let mut vol = match geom {
        Geometry::Parallel2D(g) => projectors::backproject_parallel_scaled(filtered, g, false)?,
        Geometry::Fan2D(g) => projectors::back_project_fan_2d(filtered, g, true)?,
        Geometry::Cone3D(g) => projectors::back_project_cone_3d(filtered, g, true)?,
    };
    scale_volume(&mut vol, fbp_scale(geom));
    Ok(vol)
}

fn scale_volume(vol: &mut Volume, s: f64) {
    for v in vol.data_mut() {
        *v = (*v as f64 * s) as f32;
    }
}

/// Exact transpose of [`fbp_backproject_stage`].
pub(crate) fn fbp_backproject_stage_transpose(vol: &Volume, geom: &Geometry) -> Result<Sinogram> {
    let mut scaled = vol.clone();
    scale_volume(&mut scaled, fbp_scale(geom));
    match geom {
        Geometry::Parallel2D(g) => projectors::splat_parallel(&scaled, g, false),
        Geometry::Fan2D(g) => projectors::splat_fan(&scaled, g, true),
        Geometry::Cone3D(g) => projectors::splat_cone(&scaled, g, true),
    }
}

/// Exact transpose of [`fbp_filter_stage`]; the filter is symmetric so only
/// the order of weighting and filtering flips.
pub(crate) fn fbp_filter_stage_transpose(
    sino: &Sinogram,
    geom: &Geometry,
    kind: FilterKind,
) -> Result<Sinogram> {
    geom.check_sinogram(sino)?;
    let filtered = fft_filter(sino, &pipeline_filter(geom, kind)?)?;
    Ok(match preweights(geom) {
        None => filtered,
        Some(w) => weight_rows(&filtered, &w),
    })
}

/// Filtered backprojection for any geometry.
pub fn fbp(sino: &Sinogram, geom: &Geometry, kind: FilterKind) -> Result<Volume> {
    fbp_backproject_stage(&fbp_filter_stage(sino, geom, kind)?, geom)
}

pub fn fbp_parallel_2d(sino: &Sinogram, geom: &GeometryParallel2D, kind: FilterKind) -> Result<Volume> {
    fbp(sino, &Geometry::Parallel2D(geom.clone()), kind)
}

pub fn fbp_fan_2d(sino: &Sinogram, geom: &GeometryFan2D, kind: FilterKind) -> Result<Volume> {
    fbp(sino, &Geometry::Fan2D(geom.clone()), kind)
}

pub fn fdk_cone_3d(sino: &Sinogram, geom: &GeometryCone3D, kind: FilterKind) -> Result<Volume> {
    fbp(sino, &Geometry::Cone3D(geom.clone()), kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::circular_trajectory_2d;
    use crate::grids::VolumeGeometry;
    use crate::phantoms::disk_phantom;
    use crate::projectors::{forward_project_parallel_2d, SamplingConfig};
    use proptest::prelude::*;

    // naive O(N²) DFT, real part
    fn naive_dft_re(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| v * (2.0 * PI * (j * k % n) as f64 / n as f64).cos())
                    .sum()
            })
            .collect()
    }

    fn kernel_oracle(n: usize, ds: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let m = i.min(n - i);
                if m == 0 {
                    0.25 / (ds * ds)
                } else if m % 2 == 1 {
                    -1.0 / (PI * PI * (m * m) as f64 * ds * ds)
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn padded_length() {
        assert_eq!(padded_len(2), 4);
        assert_eq!(padded_len(100), 256);
        assert_eq!(padded_len(128), 256);
        assert_eq!(ramp_filter(600, 1.0).unwrap().n_pad(), 2048);
    }

    #[test]
    fn ramp_is_dft_of_kernel() {
        let f = ramp_filter(50, 0.7).unwrap();
        let want = naive_dft_re(&kernel_oracle(128, 0.7));
        for (k, (a, b)) in f.weights().iter().zip(&want).enumerate() {
            assert!(*b >= -1e-12, "negative bin {k}: {b}");
            assert!((a - b).abs() < 1e-10 * want[64], "bin {k}: {a} vs {b}");
        }
    }

    #[test]
    fn ramp_dc_is_the_truncated_tail() {
        // h sums to zero over all integers; the DFT at DC is minus the odd tail
        // beyond half the padded length
        let n = 256;
        let ds = 1.0;
        let f = ramp_filter(128, ds).unwrap();
        let tail: f64 = (n as u64 / 2 + 1..2_000_001)
            .step_by(2)
            .map(|m| 2.0 / (PI * PI * (m as f64) * (m as f64)))
            .sum::<f64>()
            + 1.0 / (PI * PI * 2_000_000.0);
        assert!((f.weights()[0] - tail).abs() < 1e-6 * tail, "{} {tail}", f.weights()[0]);
        let max = f.weights().iter().cloned().fold(0.0, f64::max);
        assert!(f.weights()[0] < 2.0 / n as f64 * max);
    }

    #[test]
    fn filters_are_symmetric_and_finite() {
        for kind in [FilterKind::Ramp, FilterKind::SheppLogan, FilterKind::Cosine] {
            let f = make_filter(kind, 37, 1.3).unwrap();
            let n = f.n_pad();
            for k in 1..n {
                assert_eq!(f.weights()[k], f.weights()[n - k], "{kind:?} bin {k}");
            }
            assert!(f.weights().iter().all(|w| w.is_finite() && *w >= 0.0));
        }
    }

    #[test]
    fn apodized_ratios() {
        let ramp = ramp_filter(64, 0.5).unwrap();
        let sl = shepp_logan_filter(64, 0.5).unwrap();
        let cs = cosine_filter(64, 0.5).unwrap();
        let n = ramp.n_pad();
        let nyq = n / 2;
        assert!(sl.weights()[nyq] < ramp.weights()[nyq]);
        assert!(cs.weights()[nyq] < ramp.weights()[nyq]);
        let f_n = 1.0 / (2.0 * 0.5);
        for k in 1..n {
            // physical frequency of the bin
            let f = k.min(n - k) as f64 / (n as f64 * 0.5);
            let x = f / (2.0 * f_n);
            let want_sl = (PI * x).sin() / (PI * x);
            let want_cs = (PI * f / (2.0 * f_n)).cos();
            let r = ramp.weights()[k];
            assert!((sl.weights()[k] - r * want_sl).abs() <= 1e-12 * r.max(1.0));
            assert!((cs.weights()[k] - r * want_cs).abs() <= 1e-12 * r.max(1.0));
        }
    }

    #[test]
    fn bad_width() {
        assert!(ramp_filter(1, 1.0).is_err());
        assert!(ramp_filter(8, 0.0).is_err());
        let short = Filter1D::new(vec![1.0; 8], 1.0).unwrap();
        let s = Sinogram::zeros(2, vec![8], vec![1.0]).unwrap();
        assert!(fft_filter(&s, &short).is_err());
        let wrong_spacing = ramp_filter(8, 2.0).unwrap();
        assert!(fft_filter(&s, &wrong_spacing).is_err());
    }

    #[test]
    fn identity_filter_scales_by_spacing() {
        let row: Vec<f32> = (0..12).map(|i| (i as f32 * 0.7).sin()).collect();
        let s = Sinogram::from_data(1, vec![12], vec![0.25], row.clone()).unwrap();
        let f = Filter1D::new(vec![1.0; 32], 0.25).unwrap();
        let out = fft_filter(&s, &f).unwrap();
        for (a, b) in out.data().iter().zip(&row) {
            assert!((a - 0.25 * b).abs() < 1e-5);
        }
    }

    #[test]
    fn delta_reproduces_kernel() {
        let width = 40;
        let ds = 0.8;
        let j = 17;
        let mut row = vec![0f32; width];
        row[j] = 1.0;
        let s = Sinogram::from_data(1, vec![width], vec![ds], row).unwrap();
        let out = fft_filter(&s, &ramp_filter(width, ds).unwrap()).unwrap();
        let h = kernel_oracle(128, ds);
        let peak = h[0] * ds;
        for i in 0..width {
            let want = ds * h[(i + 128 - j) % 128];
            assert!((out.data()[i] as f64 - want).abs() < 1e-4 * peak, "{i}");
        }
    }

    #[test]
    fn preweight_values() {
        let vg = VolumeGeometry::new(vec![16, 16, 16], vec![1.0; 3]).unwrap();
        let g = GeometryCone3D::circular(vg, [5, 7], [1.0, 1.0], 1, 2.0 * PI, 1200.0, 750.0).unwrap();
        let w = cone_preweights(&g);
        assert_eq!(w[2 * 7 + 3], 1.0);
        for c in 3..6 {
            assert!(w[2 * 7 + c + 1] < w[2 * 7 + c]);
        }

        let vg = VolumeGeometry::new(vec![16, 16, 16], vec![1.0; 3]).unwrap();
        let g = GeometryCone3D::circular(vg, [400, 600], [1.0, 1.0], 1, 2.0 * PI, 1200.0, 750.0).unwrap();
        let w = cone_preweights(&g);
        let corner = 1200.0 / (1200.0f64.powi(2) + 199.5f64.powi(2) + 299.5f64.powi(2)).sqrt();
        assert!((w[0] - corner).abs() < 1e-12);
        assert!((w[0] - 1200.0 / 1_570_000f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn parallel_fbp_zero_and_linear() {
        let vg = VolumeGeometry::new(vec![32, 32], vec![1.0, 1.0]).unwrap();
        let g = GeometryParallel2D::new(vg.clone(), 48, 1.0, circular_trajectory_2d(60, PI).unwrap()).unwrap();
        let zero = Geometry::Parallel2D(g.clone()).empty_sinogram();
        let r = fbp_parallel_2d(&zero, &g, FilterKind::Ramp).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));

        let disk = disk_phantom(&vg, 10.0, 1.0).unwrap();
        let mut s = forward_project_parallel_2d(&disk, &g, &SamplingConfig::default()).unwrap();
        let r1 = fbp_parallel_2d(&s, &g, FilterKind::SheppLogan).unwrap();
        s.scale(2.0);
        let r2 = fbp_parallel_2d(&s, &g, FilterKind::SheppLogan).unwrap();
        for (a, b) in r1.data().iter().zip(r2.data()) {
            assert!((2.0 * a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
        // center recovers the disk value roughly
        assert!((r1.get(&[16, 16]) - 1.0).abs() < 0.1);
    }

    proptest! {
        #[test]
        fn fft_filter_equals_cyclic_convolution(row in prop::collection::vec(-10f32..10.0, 2..40), ds in 0.2f64..3.0) {
            let w = row.len();
            let s = Sinogram::from_data(1, vec![w], vec![ds], row.clone()).unwrap();
            let f = ramp_filter(w, ds).unwrap();
            let n = f.n_pad();
            let h = kernel_oracle(n, ds);
            let out = fft_filter(&s, &f).unwrap();
            let scale: f64 = row.iter().map(|v| v.abs() as f64).sum::<f64>() * h[0] * ds + 1e-6;
            for i in 0..w {
                let want: f64 = (0..w).map(|j| row[j] as f64 * h[(i + n - j) % n]).sum::<f64>() * ds;
                prop_assert!((out.data()[i] as f64 - want).abs() <= 1e-5 * scale);
            }
        }
    }
}
