//! Sinogram degradation simulators: detector jitter, Poisson and Gaussian
//! noise, ring artifacts and gantry motion blur.
//!
//! Random draws come from ChaCha8 seeded with `seed` (via
//! `SeedableRng::seed_from_u64`). Each projection reads its own stream,
//! selected by the simulator and the projection index, so results do not
//! depend on how projections are scheduled across threads.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::grids::Sinogram;

pub type NoiseSeed = u64;

// stream tags, one per simulator, in the top 16 bits of the stream id
const TAG_JITTER: u64 = 1;
const TAG_POISSON: u64 = 2;
const TAG_GAUSSIAN: u64 = 3;

/// Generator for projection `index` of the simulator with `tag`.
fn projection_rng(seed: NoiseSeed, tag: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 48) | index as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorAxis {
    U,
    V,
}

/// Shifts drawn by [`add_detector_jitter`], one per projection.
pub fn jitter_shifts(n_projections: usize, max_shift_px: usize, seed: NoiseSeed) -> Vec<i64> {
    let m = max_shift_px as i64;
    (0..n_projections)
        .map(|i| {
            if m == 0 {
                0
            } else {
                projection_rng(seed, TAG_JITTER, i).random_range(-m..=m)
            }
        })
        .collect()
}

/// Translates each projection by one random integer shift in
/// `[-max_shift_px, max_shift_px]` along `axis`; vacated pixels become zero.
pub fn add_detector_jitter(
    sino: &Sinogram,
    max_shift_px: usize,
    axis: DetectorAxis,
    seed: NoiseSeed,
) -> Result<Sinogram> {
    let det = sino.detector_shape();
    let (rows, cols) = match (det, axis) {
        ([cols], DetectorAxis::U) => (1, *cols),
        ([_], DetectorAxis::V) => {
            return Err(Error::invalid("line detectors only support jitter along u"))
        }
        ([rows, cols], _) => (*rows, *cols),
        _ => return Err(Error::invalid("unsupported detector dimensionality")),
    };
    let shifts = jitter_shifts(sino.n_projections(), max_shift_px, seed);
    let mut out = sino.zeros_like();
    let len = sino.projection_len();
    out.data_mut()
        .par_chunks_mut(len)
        .zip(sino.data().par_chunks(len))
        .zip(shifts.par_iter())
        .for_each(|((dst, src), &s)| match axis {
            DetectorAxis::U => {
                for r in 0..rows {
                    shift_line(&src[r * cols..(r + 1) * cols], &mut dst[r * cols..(r + 1) * cols], s);
                }
            }
            DetectorAxis::V => {
                for r in 0..rows {
                    let from = r as i64 - s;
                    if from >= 0 && (from as usize) < rows {
                        let f = from as usize;
                        dst[r * cols..(r + 1) * cols].copy_from_slice(&src[f * cols..(f + 1) * cols]);
                    }
                }
            }
        });
    Ok(out)
}

/// `dst[i] = src[i - s]`, zero where `i - s` is out of range.
fn shift_line(src: &[f32], dst: &mut [f32], s: i64) {
    let n = src.len() as i64;
    for (i, d) in dst.iter_mut().enumerate() {
        let j = i as i64 - s;
        *d = if j >= 0 && j < n { src[j as usize] } else { 0.0 };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonMode {
    /// counts ~ Poisson(i0 · exp(-p)), clamped to >= 1; output -ln(counts / i0)
    Transmission,
    /// output ~ Poisson(p)
    Direct,
}

fn poisson_draw(rng: &mut ChaCha8Rng, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let d = Poisson::new(lambda)
        .map_err(|e| Error::invalid(format!("Poisson rate {lambda}: {e}")))?;
    Ok(d.sample(rng))
}

pub fn add_poisson_noise(
    sino: &Sinogram,
    i0: f64,
    mode: PoissonMode,
    seed: NoiseSeed,
) -> Result<Sinogram> {
    if !(i0 > 0.0 && i0.is_finite()) {
        return Err(Error::invalid(format!("i0 must be positive, got {i0}")));
    }
    if let Some(p) = sino.data().iter().find(|&&p| p < 0.0) {
        return Err(Error::invalid(format!(
            "Poisson noise needs non-negative input, found {p}"
        )));
    }
    let mut out = sino.zeros_like();
    let len = sino.projection_len();
    out.data_mut()
        .par_chunks_mut(len)
        .zip(sino.data().par_chunks(len))
        .enumerate()
        .try_for_each(|(i, (dst, src))| -> Result<()> {
            let mut rng = projection_rng(seed, TAG_POISSON, i);
            for (d, &p) in dst.iter_mut().zip(src) {
                *d = match mode {
                    PoissonMode::Transmission => {
                        let counts = poisson_draw(&mut rng, i0 * (-(p as f64)).exp())?.max(1.0);
                        -(counts / i0).ln()
                    }
                    PoissonMode::Direct => poisson_draw(&mut rng, p as f64)?,
                } as f32;
            }
            Ok(())
        })?;
    Ok(out)
}

/// `out = in + mean + std · z` with `z` standard normal per pixel.
pub fn add_gaussian_noise(sino: &Sinogram, mean: f64, std: f64, seed: NoiseSeed) -> Result<Sinogram> {
    if !(std >= 0.0 && std.is_finite() && mean.is_finite()) {
        return Err(Error::invalid(format!(
            "Gaussian noise needs finite mean and std >= 0, got {mean}, {std}"
        )));
    }
    let mut out = sino.zeros_like();
    let len = sino.projection_len();
    out.data_mut()
        .par_chunks_mut(len)
        .zip(sino.data().par_chunks(len))
        .enumerate()
        .for_each(|(i, (dst, src))| {
            let mut rng = projection_rng(seed, TAG_GAUSSIAN, i);
            for (d, &p) in dst.iter_mut().zip(src) {
                let z: f64 = if std == 0.0 { 0.0 } else { rng.sample(StandardNormal) };
                *d = (p as f64 + mean + std * z) as f32;
            }
        });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "factor")]
pub enum RingMode {
    Zero,
    Scale(f64),
}

/// Sets (or scales) the listed detector columns in every projection of
/// `projection_range`. For cone-beam detectors a column spans all rows.
pub fn add_ring_artifact(
    sino: &Sinogram,
    columns: &[usize],
    projection_range: Range<usize>,
    mode: RingMode,
) -> Result<Sinogram> {
    let cols = *sino.detector_shape().last().expect("detector has an axis");
    if let Some(c) = columns.iter().find(|&&c| c >= cols) {
        return Err(Error::invalid(format!(
            "ring column {c} outside detector width {cols}"
        )));
    }
    if projection_range.start > projection_range.end
        || projection_range.end > sino.n_projections()
    {
        return Err(Error::invalid(format!(
            "projection range {projection_range:?} outside 0..{}",
            sino.n_projections()
        )));
    }
    if let RingMode::Scale(f) = mode {
        if !f.is_finite() {
            return Err(Error::invalid("ring scale factor must be finite"));
        }
    }
    let mut out = sino.clone();
    for p in projection_range {
        for line in out.projection_mut(p).chunks_mut(cols) {
            for &c in columns {
                line[c] = match mode {
                    RingMode::Zero => 0.0,
                    RingMode::Scale(f) => (line[c] as f64 * f) as f32,
                };
            }
        }
    }
    Ok(out)
}

/// Bilinearly rasterized line kernel of `len` taps at angle `theta`
/// (radians, measured from +u towards +v). Returns `(radius, weights)` with
/// weights on a `(2r+1)²` grid indexed `[dv][du]`, summing to one.
pub fn line_kernel(len: usize, theta: f64) -> (usize, Vec<f64>) {
    let half = (len as f64 - 1.0) * 0.5;
    let r = half.ceil() as usize + 1;
    let side = 2 * r + 1;
    let mut k = vec![0.0; side * side];
    let (s, c) = theta.sin_cos();
    let w = 1.0 / len as f64;
    for t in 0..len {
        let d = t as f64 - half;
        let (u, v) = (d * c + r as f64, d * s + r as f64);
        let (u0, v0) = (u.floor(), v.floor());
        let (fu, fv) = (u - u0, v - v0);
        let (u0, v0) = (u0 as usize, v0 as usize);
        for (dv, wv) in [(0, 1.0 - fv), (1, fv)] {
            for (du, wu) in [(0, 1.0 - fu), (1, fu)] {
                let (iu, iv) = (u0 + du, v0 + dv);
                if iu < side && iv < side {
                    k[iv * side + iu] += w * wu * wv;
                }
            }
        }
    }
    (r, k)
}

/// Blurs each projection with a uniform line kernel of odd length oriented
/// at the projection's acquisition angle. Line detectors get a plain moving
/// average along `u`. Boundaries are zero-padded.
pub fn add_gantry_motion_blur(
    sino: &Sinogram,
    geom: &Geometry,
    kernel_len_px: usize,
) -> Result<Sinogram> {
    if kernel_len_px == 0 || kernel_len_px % 2 == 0 {
        return Err(Error::invalid(format!(
            "kernel length must be odd and positive, got {kernel_len_px}"
        )));
    }
    geom.check_sinogram(sino)?;
    if kernel_len_px == 1 {
        return Ok(sino.clone());
    }
    let len = sino.projection_len();
    let mut out = sino.zeros_like();
    match sino.detector_shape() {
        [cols] => {
            let cols = *cols;
            let h = (kernel_len_px / 2) as i64;
            let w = 1.0 / kernel_len_px as f64;
            out.data_mut()
                .par_chunks_mut(cols)
                .zip(sino.data().par_chunks(cols))
                .for_each(|(dst, src)| {
                    for (i, d) in dst.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for j in (i as i64 - h).max(0)..=(i as i64 + h).min(cols as i64 - 1) {
                            acc += src[j as usize] as f64;
                        }
                        *d = (acc * w) as f32;
                    }
                });
        }
        [rows, cols] => {
            let (rows, cols) = (*rows as i64, *cols as i64);
            let angles = geom.angles();
            out.data_mut()
                .par_chunks_mut(len)
                .zip(sino.data().par_chunks(len))
                .zip(angles.par_iter())
                .for_each(|((dst, src), &theta)| {
                    let (r, k) = line_kernel(kernel_len_px, theta);
                    let side = 2 * r as i64 + 1;
                    let taps: Vec<(i64, i64, f64)> = k
                        .iter()
                        .enumerate()
                        .filter(|(_, w)| **w != 0.0)
                        .map(|(i, w)| (i as i64 / side - r as i64, i as i64 % side - r as i64, *w))
                        .collect();
                    for y in 0..rows {
                        for x in 0..cols {
                            let mut acc = 0.0;
                            for &(dv, du, w) in &taps {
                                let (sy, sx) = (y - dv, x - du);
                                if sy >= 0 && sy < rows && sx >= 0 && sx < cols {
                                    acc += w * src[(sy * cols + sx) as usize] as f64;
                                }
                            }
                            dst[(y * cols + x) as usize] = acc as f32;
                        }
                    }
                });
        }
        _ => return Err(Error::invalid("unsupported detector dimensionality")),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{circular_trajectory_2d, GeometryCone3D, GeometryParallel2D};
    use crate::grids::VolumeGeometry;
    use std::f64::consts::PI;

    fn sino1d(n: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Sinogram {
        let data = (0..n * w).map(|k| f(k / w, k % w)).collect();
        Sinogram::from_data(n, vec![w], vec![1.0], data).unwrap()
    }

    fn sino2d(n: usize, rows: usize, cols: usize, f: impl Fn(usize) -> f32) -> Sinogram {
        let data = (0..n * rows * cols).map(f).collect();
        Sinogram::from_data(n, vec![rows, cols], vec![1.0, 1.0], data).unwrap()
    }

    #[test]
    fn jitter_zero_is_identity_and_deterministic() {
        let s = sino1d(10, 16, |p, c| (p * 16 + c) as f32);
        assert_eq!(add_detector_jitter(&s, 0, DetectorAxis::U, 3).unwrap(), s);
        let a = add_detector_jitter(&s, 3, DetectorAxis::U, 42).unwrap();
        let b = add_detector_jitter(&s, 3, DetectorAxis::U, 42).unwrap();
        assert_eq!(a, b);
        assert!(add_detector_jitter(&s, 3, DetectorAxis::V, 42).is_err());
    }

    #[test]
    fn jitter_matches_reimplemented_shift() {
        let s = sino1d(50, 20, |p, c| 1.0 + (p * 20 + c) as f32);
        let shifts = jitter_shifts(50, 4, 9);
        assert!(shifts.iter().all(|s| s.abs() <= 4));
        assert!(shifts.iter().any(|&s| s != 0));
        let out = add_detector_jitter(&s, 4, DetectorAxis::U, 9).unwrap();
        for (p, &sh) in shifts.iter().enumerate() {
            let src = s.projection(p);
            let dst = out.projection(p);
            for i in 0..20i64 {
                let want = if i - sh >= 0 && i - sh < 20 { src[(i - sh) as usize] } else { 0.0 };
                assert_eq!(dst[i as usize], want);
            }
        }
    }

    #[test]
    fn jitter_along_v() {
        let s = sino2d(6, 5, 4, |k| k as f32 + 1.0);
        let shifts = jitter_shifts(6, 2, 1);
        let out = add_detector_jitter(&s, 2, DetectorAxis::V, 1).unwrap();
        for (p, &sh) in shifts.iter().enumerate() {
            for r in 0..5i64 {
                for c in 0..4 {
                    let want = if r - sh >= 0 && r - sh < 5 {
                        s.projection(p)[(r - sh) as usize * 4 + c]
                    } else {
                        0.0
                    };
                    assert_eq!(out.projection(p)[r as usize * 4 + c], want);
                }
            }
        }
    }

    #[test]
    fn poisson_validation_and_determinism() {
        let s = sino1d(4, 8, |_, _| 1.0);
        assert!(add_poisson_noise(&s, 0.0, PoissonMode::Transmission, 1).is_err());
        let neg = sino1d(1, 2, |_, c| c as f32 - 1.0);
        assert!(add_poisson_noise(&neg, 1e3, PoissonMode::Transmission, 1).is_err());
        let a = add_poisson_noise(&s, 1e4, PoissonMode::Transmission, 5).unwrap();
        assert_eq!(a, add_poisson_noise(&s, 1e4, PoissonMode::Transmission, 5).unwrap());
        assert_ne!(a, add_poisson_noise(&s, 1e4, PoissonMode::Transmission, 6).unwrap());
        let d = add_poisson_noise(&s, 1.0, PoissonMode::Direct, 5).unwrap();
        assert!(d.data().iter().all(|v| v.fract() == 0.0 && *v >= 0.0));
    }

    #[test]
    fn poisson_transmission_clamps_counts() {
        // with i0 = 1 and a huge line integral almost every draw is zero counts
        let s = sino1d(1, 100, |_, _| 30.0);
        let out = add_poisson_noise(&s, 1.0, PoissonMode::Transmission, 0).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gaussian_std_zero_adds_mean() {
        let s = sino1d(3, 5, |p, c| (p + c) as f32 * 0.5);
        let out = add_gaussian_noise(&s, 0.25, 0.0, 7).unwrap();
        for (a, b) in out.data().iter().zip(s.data()) {
            assert_eq!(*a, ((*b as f64) + 0.25) as f32);
        }
        assert!(add_gaussian_noise(&s, 0.0, -1.0, 7).is_err());
    }

    #[test]
    fn ring_modes() {
        let s = sino1d(8, 10, |p, c| (p * 10 + c) as f32 + 1.0);
        let z = add_ring_artifact(&s, &[2, 7], 3..6, RingMode::Zero).unwrap();
        for p in 0..8 {
            for c in 0..10 {
                let v = z.projection(p)[c];
                if (3..6).contains(&p) && (c == 2 || c == 7) {
                    assert_eq!(v, 0.0);
                } else {
                    assert_eq!(v.to_bits(), s.projection(p)[c].to_bits());
                }
            }
        }
        assert_eq!(add_ring_artifact(&s, &[1], 0..8, RingMode::Scale(1.0)).unwrap(), s);
        assert_eq!(add_ring_artifact(&s, &[1], 4..4, RingMode::Zero).unwrap(), s);
        assert!(add_ring_artifact(&s, &[10], 0..1, RingMode::Zero).is_err());
        assert!(add_ring_artifact(&s, &[1], 0..9, RingMode::Zero).is_err());
    }

    #[test]
    fn line_kernel_sums_to_one() {
        for len in [1, 3, 5, 9] {
            for theta in [0.0, 0.3, 1.0, 2.5, -0.7] {
                let (_, k) = line_kernel(len, theta);
                let sum: f64 = k.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    fn cone_geom(n: usize) -> Geometry {
        let vg = VolumeGeometry::new(vec![16, 16, 16], vec![1.0; 3]).unwrap();
        GeometryCone3D::circular(vg, [9, 11], [1.0, 1.0], n, 2.0 * PI, 500.0, 300.0)
            .unwrap()
            .into()
    }

    #[test]
    fn blur_identity_constant_and_impulse() {
        let g = cone_geom(4);
        let s = sino2d(4, 9, 11, |k| (k % 13) as f32);
        assert_eq!(add_gantry_motion_blur(&s, &g, 1).unwrap(), s);
        assert!(add_gantry_motion_blur(&s, &g, 4).is_err());

        let c = sino2d(4, 9, 11, |_| 3.0);
        let out = add_gantry_motion_blur(&c, &g, 3).unwrap();
        for p in 0..4 {
            for r in 3..6 {
                for col in 3..8 {
                    assert!((out.projection(p)[r * 11 + col] - 3.0).abs() < 1e-5);
                }
            }
        }

        // view 0 has angle 0: impulse spreads over five pixels along u
        let imp = sino2d(4, 9, 11, |k| if k == 4 * 11 + 5 { 1.0 } else { 0.0 });
        let out = add_gantry_motion_blur(&imp, &g, 5).unwrap();
        let p0 = out.projection(0);
        for col in 0..11 {
            for r in 0..9 {
                let want = if r == 4 && (3..=7).contains(&col) { 0.2 } else { 0.0 };
                assert!((p0[r * 11 + col] - want).abs() < 1e-6, "({r},{col})");
            }
        }
    }

    #[test]
    fn blur_line_detector_is_moving_average() {
        let vg = VolumeGeometry::new(vec![16, 16], vec![1.0; 2]).unwrap();
        let g: Geometry = GeometryParallel2D::new(vg, 12, 1.0, circular_trajectory_2d(2, PI).unwrap())
            .unwrap()
            .into();
        let s = sino1d(2, 12, |p, c| (p * 12 + c * c) as f32);
        let out = add_gantry_motion_blur(&s, &g, 3).unwrap();
        for p in 0..2 {
            let src = s.projection(p);
            for i in 0..12usize {
                let mut acc = 0.0f64;
                for j in i.saturating_sub(1)..=(i + 1).min(11) {
                    acc += src[j] as f64;
                }
                assert!((out.projection(p)[i] as f64 - acc / 3.0).abs() < 1e-4);
            }
        }
    }
}
