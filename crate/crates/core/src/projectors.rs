//! Ray-driven forward projection and voxel-driven backprojection.
//!
//! The forward operators march each detector ray through the volume at a
//! fixed arc-length step and sum bilinearly (2D) or trilinearly (3D)
//! interpolated samples, so their output is a line integral in
//! `attenuation · mm`. Samples outside the grid read zero.
//!
//! The backprojectors visit every voxel, map its center onto the detector
//! and linearly interpolate the measurement there. Without FDK weighting
//! each contribution is scaled by the change-of-variables factor between
//! detector-pixel/arc-length measure and volume measure, which makes the
//! voxel-driven operator an approximation of the transpose of the
//! ray-driven one (the two discretizations are not matched exactly). With
//! FDK weighting the contribution is the plain interpolated value times
//! the distance weight `(sid / w)²`, as used by the reconstruction
//! pipelines.
//!
//! All kernels parallelize over output elements and accumulate in a fixed
//! order, so results are bit-identical for any thread count.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometryCone3D, GeometryFan2D, GeometryParallel2D};
use crate::grids::{Sinogram, Volume, VolumeGeometry};

/// Discretization of the ray integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    step_scale: f64,
}

impl SamplingConfig {
    /// Ray-march step is `step_scale * min(volume spacing)`; `0 < step_scale <= 1`.
    pub fn new(step_scale: f64) -> Result<Self> {
        if !(step_scale > 0.0 && step_scale <= 1.0) {
            return Err(Error::invalid(format!(
                "step_scale must lie in (0, 1], got {step_scale}"
            )));
        }
        Ok(Self { step_scale })
    }

    pub fn step_scale(&self) -> f64 {
        self.step_scale
    }

    /// Step length in mm for `volume`.
    pub fn step(&self, volume: &VolumeGeometry) -> f64 {
        self.step_scale * volume.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { step_scale: 0.5 }
    }
}

// ---------------------------------------------------------------------------
// Volume sampling
// ---------------------------------------------------------------------------

/// Volume viewed in continuous index space, padded with zeros.
struct VolumeSampler<'a> {
    data: &'a [f32],
    /// [nx, ny, nz]; nz = 1 for 2D
    n: [usize; 3],
    /// [sx, sy, sz]
    s: [f64; 3],
    /// half extent of the interpolant support, per axis
    half: [f64; 3],
    three_d: bool,
}

impl<'a> VolumeSampler<'a> {
    fn new(geometry: &VolumeGeometry, data: &'a [f32]) -> Self {
        let (n, s, three_d) = match geometry.shape.as_slice() {
            [ny, nx] => (
                [*nx, *ny, 1],
                [geometry.spacing[1], geometry.spacing[0], 1.0],
                false,
            ),
            [nz, ny, nx] => (
                [*nx, *ny, *nz],
                [geometry.spacing[2], geometry.spacing[1], geometry.spacing[0]],
                true,
            ),
            _ => unreachable!("geometries only hold 2D or 3D volumes"),
        };
        let half = [
            (n[0] as f64 + 1.0) * 0.5 * s[0],
            (n[1] as f64 + 1.0) * 0.5 * s[1],
            if three_d {
                (n[2] as f64 + 1.0) * 0.5 * s[2]
            } else {
                f64::INFINITY
            },
        ];
        Self {
            data,
            n,
            s,
            half,
            three_d,
        }
    }

    /// Clips the ray `o + t·d` (|d| = 1) to the interpolant support.
    fn clip(&self, o: [f64; 3], d: [f64; 3], mut t0: f64, mut t1: f64) -> Option<(f64, f64)> {
        let axes = if self.three_d { 3 } else { 2 };
        for k in 0..axes {
            if d[k] == 0.0 {
                if o[k].abs() > self.half[k] {
                    return None;
                }
            } else {
                let a = (-self.half[k] - o[k]) / d[k];
                let b = (self.half[k] - o[k]) / d[k];
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                t0 = t0.max(lo);
                t1 = t1.min(hi);
            }
        }
        (t1 > t0).then_some((t0, t1))
    }

    #[inline]
    fn at2(&self, ix: isize, iy: isize) -> f64 {
        if ix < 0 || iy < 0 || ix as usize >= self.n[0] || iy as usize >= self.n[1] {
            0.0
        } else {
            self.data[iy as usize * self.n[0] + ix as usize] as f64
        }
    }

    #[inline]
    fn at3(&self, ix: isize, iy: isize, iz: isize) -> f64 {
        if ix < 0
            || iy < 0
            || iz < 0
            || ix as usize >= self.n[0]
            || iy as usize >= self.n[1]
            || iz as usize >= self.n[2]
        {
            0.0
        } else {
            self.data[(iz as usize * self.n[1] + iy as usize) * self.n[0] + ix as usize] as f64
        }
    }

    /// Bilinear sample at continuous index (fx, fy).
    #[inline]
    fn bilinear(&self, fx: f64, fy: f64) -> f64 {
        let x0 = fx.floor();
        let y0 = fy.floor();
        let wx = fx - x0;
        let wy = fy - y0;
        let (ix, iy) = (x0 as isize, y0 as isize);
        let nx = self.n[0] as isize;
        let ny = self.n[1] as isize;
        if ix >= 0 && iy >= 0 && ix + 1 < nx && iy + 1 < ny {
            let base = iy as usize * self.n[0] + ix as usize;
            let d = self.data;
            let a = d[base] as f64;
            let b = d[base + 1] as f64;
            let c = d[base + self.n[0]] as f64;
            let e = d[base + self.n[0] + 1] as f64;
            (1.0 - wy) * ((1.0 - wx) * a + wx * b) + wy * ((1.0 - wx) * c + wx * e)
        } else {
            (1.0 - wy) * ((1.0 - wx) * self.at2(ix, iy) + wx * self.at2(ix + 1, iy))
                + wy * ((1.0 - wx) * self.at2(ix, iy + 1) + wx * self.at2(ix + 1, iy + 1))
        }
    }

    /// Trilinear sample at continuous index (fx, fy, fz).
    #[inline]
    fn trilinear(&self, fx: f64, fy: f64, fz: f64) -> f64 {
        let x0 = fx.floor();
        let y0 = fy.floor();
        let z0 = fz.floor();
        let wx = fx - x0;
        let wy = fy - y0;
        let wz = fz - z0;
        let (ix, iy, iz) = (x0 as isize, y0 as isize, z0 as isize);
        let (nx, ny, nz) = (self.n[0] as isize, self.n[1] as isize, self.n[2] as isize);
        let (c000, c100, c010, c110, c001, c101, c011, c111);
        if ix >= 0 && iy >= 0 && iz >= 0 && ix + 1 < nx && iy + 1 < ny && iz + 1 < nz {
            let sx = 1usize;
            let sy = self.n[0];
            let sz = self.n[0] * self.n[1];
            let base = iz as usize * sz + iy as usize * sy + ix as usize;
            let d = self.data;
            c000 = d[base] as f64;
            c100 = d[base + sx] as f64;
            c010 = d[base + sy] as f64;
            c110 = d[base + sy + sx] as f64;
            c001 = d[base + sz] as f64;
            c101 = d[base + sz + sx] as f64;
            c011 = d[base + sz + sy] as f64;
            c111 = d[base + sz + sy + sx] as f64;
        } else {
            c000 = self.at3(ix, iy, iz);
            c100 = self.at3(ix + 1, iy, iz);
            c010 = self.at3(ix, iy + 1, iz);
            c110 = self.at3(ix + 1, iy + 1, iz);
            c001 = self.at3(ix, iy, iz + 1);
            c101 = self.at3(ix + 1, iy, iz + 1);
            c011 = self.at3(ix, iy + 1, iz + 1);
            c111 = self.at3(ix + 1, iy + 1, iz + 1);
        }
        let c00 = c000 + wx * (c100 - c000);
        let c10 = c010 + wx * (c110 - c010);
        let c01 = c001 + wx * (c101 - c001);
        let c11 = c011 + wx * (c111 - c011);
        let c0 = c00 + wy * (c10 - c00);
        let c1 = c01 + wy * (c11 - c01);
        c0 + wz * (c1 - c0)
    }

    /// Midpoint-rule line integral of the interpolated volume along
    /// `o + t·d`, `t ∈ [t0, t1]`, with step `step`.
    ///
    /// Samples sit at `t_ref + (k + 1/2)·step` where `t_ref` is the point of
    /// the line closest to the isocenter, so the lattice does not move with
    /// the clipping interval; only samples inside the support are visited.
    fn integrate(&self, o: [f64; 3], d: [f64; 3], t0: f64, t1: f64, step: f64) -> f64 {
        let Some((a, b)) = self.clip(o, d, t0, t1) else {
            return 0.0;
        };
        let t_ref = -(o[0] * d[0] + o[1] * d[1] + o[2] * d[2]);
        let k0 = ((a - t_ref) / step - 0.5).ceil();
        let k1 = ((b - t_ref) / step - 0.5).floor();
        if k1 < k0 {
            return 0.0;
        }
        let n = (k1 - k0) as usize + 1;
        // continuous index coordinates of the first sample and per-step increment
        let c = [
            (self.n[0] as f64 - 1.0) * 0.5,
            (self.n[1] as f64 - 1.0) * 0.5,
            (self.n[2] as f64 - 1.0) * 0.5,
        ];
        let start = t_ref + (k0 + 0.5) * step;
        let f0 = [
            (o[0] + start * d[0]) / self.s[0] + c[0],
            (o[1] + start * d[1]) / self.s[1] + c[1],
            (o[2] + start * d[2]) / self.s[2] + c[2],
        ];
        let df = [
            step * d[0] / self.s[0],
            step * d[1] / self.s[1],
            step * d[2] / self.s[2],
        ];
        let mut acc = 0.0;
        if self.three_d {
            for k in 0..n {
                let k = k as f64;
                acc += self.trilinear(f0[0] + k * df[0], f0[1] + k * df[1], f0[2] + k * df[2]);
            }
        } else {
            for k in 0..n {
                let k = k as f64;
                acc += self.bilinear(f0[0] + k * df[0], f0[1] + k * df[1]);
            }
        }
        acc * step
    }
}

// ---------------------------------------------------------------------------
// Ray geometry (forward) and voxel footprint (back)
// ---------------------------------------------------------------------------

/// One detector ray in world coordinates: `origin + t·dir`, `t ∈ [t0, t1]`.
struct Ray {
    origin: [f64; 3],
    dir: [f64; 3],
    t0: f64,
    t1: f64,
}

trait RayModel: Sync {
    fn volume(&self) -> &VolumeGeometry;
    fn n_views(&self) -> usize;
    /// (rows, cols); rows = 1 for line detectors
    fn detector(&self) -> (usize, usize);
    fn ray(&self, view: usize, row: usize, col: usize) -> Ray;
}

/// Where a voxel lands on the detector of one view and with what weight.
trait VoxelModel: Sync {
    fn volume(&self) -> &VolumeGeometry;
    fn n_views(&self) -> usize;
    fn detector(&self) -> (usize, usize);
    /// (col, row, weight) for the voxel centered at world point `x`, or `None`
    /// when the voxel does not project (behind the source).
    fn footprint(&self, view: usize, x: [f64; 3]) -> Option<(f64, f64, f64)>;
}

fn center(n: usize) -> f64 {
    (n as f64 - 1.0) * 0.5
}

struct ParallelModel<'a> {
    geom: &'a GeometryParallel2D,
    trig: Vec<(f64, f64)>,
    weight: f64,
}

impl<'a> ParallelModel<'a> {
    fn new(geom: &'a GeometryParallel2D, adjoint_scaled: bool) -> Self {
        let v = geom.volume();
        let weight = if adjoint_scaled {
            v.voxel_measure() / geom.detector_spacing()
        } else {
            1.0
        };
        Self {
            geom,
            trig: geom.angles().iter().map(|a| a.sin_cos()).collect(),
            weight,
        }
    }
}

impl RayModel for ParallelModel<'_> {
    fn volume(&self) -> &VolumeGeometry {
        self.geom.volume()
    }
    fn n_views(&self) -> usize {
        self.trig.len()
    }
    fn detector(&self) -> (usize, usize) {
        (1, self.geom.detector_width())
    }
    fn ray(&self, view: usize, _row: usize, col: usize) -> Ray {
        let (s, c) = self.trig[view];
        let t = (col as f64 - center(self.geom.detector_width())) * self.geom.detector_spacing();
        Ray {
            origin: [t * c, t * s, 0.0],
            dir: [-s, c, 0.0],
            t0: f64::NEG_INFINITY,
            t1: f64::INFINITY,
        }
    }
}

impl VoxelModel for ParallelModel<'_> {
    fn volume(&self) -> &VolumeGeometry {
        self.geom.volume()
    }
    fn n_views(&self) -> usize {
        self.trig.len()
    }
    fn detector(&self) -> (usize, usize) {
        (1, self.geom.detector_width())
    }
    fn footprint(&self, view: usize, x: [f64; 3]) -> Option<(f64, f64, f64)> {
        let (s, c) = self.trig[view];
        let t = x[0] * c + x[1] * s;
        let col = t / self.geom.detector_spacing() + center(self.geom.detector_width());
        Some((col, 0.0, self.weight))
    }
}

#[derive(Clone, Copy)]
enum VoxelWeighting {
    /// change-of-variables factor; approximate transpose of the forward op
    Adjoint,
    /// `(sid / w)²`
    Fdk,
}

struct FanModel<'a> {
    geom: &'a GeometryFan2D,
    trig: Vec<(f64, f64)>,
    weighting: VoxelWeighting,
}

impl<'a> FanModel<'a> {
    fn new(geom: &'a GeometryFan2D, weighting: VoxelWeighting) -> Self {
        Self {
            geom,
            trig: geom.angles().iter().map(|a| a.sin_cos()).collect(),
            weighting,
        }
    }
}

impl RayModel for FanModel<'_> {
    fn volume(&self) -> &VolumeGeometry {
        self.geom.volume()
    }
    fn n_views(&self) -> usize {
        self.trig.len()
    }
    fn detector(&self) -> (usize, usize) {
        (1, self.geom.detector_width())
    }
    fn ray(&self, view: usize, _row: usize, col: usize) -> Ray {
        let (s, c) = self.trig[view];
        let g = self.geom;
        let src = [g.sid() * c, g.sid() * s];
        let off = (col as f64 - center(g.detector_width())) * g.detector_spacing();
        let back = g.sdd() - g.sid();
        let pix = [-back * c - off * s, -back * s + off * c];
        let d = [pix[0] - src[0], pix[1] - src[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        Ray {
            origin: [src[0], src[1], 0.0],
            dir: [d[0] / len, d[1] / len, 0.0],
            t0: 0.0,
            t1: len,
        }
    }
}

impl VoxelModel for FanModel<'_> {
    fn volume(&self) -> &VolumeGeometry {
        self.geom.volume()
    }
    fn n_views(&self) -> usize {
        self.trig.len()
    }
    fn detector(&self) -> (usize, usize) {
        (1, self.geom.detector_width())
    }
    fn footprint(&self, view: usize, x: [f64; 3]) -> Option<(f64, f64, f64)> {
        let (s, c) = self.trig[view];
        let g = self.geom;
        // depth from the source along the central ray
        let w = g.sid() - (x[0] * c + x[1] * s);
        if w <= 0.0 {
            return None;
        }
        let along_u = -x[0] * s + x[1] * c;
        let col = g.sdd() * along_u / (w * g.detector_spacing()) + center(g.detector_width());
        let weight = match self.weighting {
            VoxelWeighting::Adjoint => {
                let r = (w * w + along_u * along_u).sqrt();
                g.volume().voxel_measure() * g.sdd() * r / (g.detector_spacing() * w * w)
            }
            VoxelWeighting::Fdk => {
                let q = g.sid() / w;
                q * q
            }
        };
        Some((col, 0.0, weight))
    }
}

struct ConeView {
    p: [[f64; 4]; 3],
    minv: Matrix3<f64>,
    source: Vector3<f64>,
    abs_det: f64,
}

struct ConeModel<'a> {
    geom: &'a GeometryCone3D,
    views: Vec<ConeView>,
    weighting: VoxelWeighting,
}

impl<'a> ConeModel<'a> {
    fn new(geom: &'a GeometryCone3D, weighting: VoxelWeighting) -> Result<Self> {
        let views = geom
            .matrices()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let m3 = m.m3();
                let minv = m3.try_inverse().ok_or_else(|| {
                    Error::DegenerateGeometry(format!("matrix {i} has a singular 3x3 block"))
                })?;
                let source = m.source_position()?;
                let e = m.to_row_major();
                Ok(ConeView {
                    p: [
                        [e[0], e[1], e[2], e[3]],
                        [e[4], e[5], e[6], e[7]],
                        [e[8], e[9], e[10], e[11]],
                    ],
                    minv,
                    source,
                    abs_det: m3.determinant().abs(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            geom,
            views,
            weighting,
        })
    }
}

impl RayModel for ConeModel<'_> {
    fn volume(&self) -> &VolumeGeometry {
        self.geom.volume()
    }
    fn n_views(&self) -> usize {
        self.views.len()
    }
    fn detector(&self) -> (usize, usize) {
        let [r, c] = self.geom.detector_shape();
        (r, c)
    }
    fn ray(&self, view: usize, row: usize, col: usize) -> Ray {
        let v = &self.views[view];
        // direction with unit depth along the principal axis
        let d = v.minv * Vector3::new(col as f64, row as f64, 1.0);
        let len = d.norm();
        Ray {
            origin: [v.source.x, v.source.y, v.source.z],
            dir: [d.x / len, d.y / len, d.z / len],
            t0: 0.0,
            t1: self.geom.sdd() * len,
        }
    }
}

impl VoxelModel for ConeModel<'_> {
    fn volume(&self) -> &VolumeGeometry {
        self.geom.volume()
    }
    fn n_views(&self) -> usize {
        self.views.len()
    }
    fn detector(&self) -> (usize, usize) {
        let [r, c] = self.geom.detector_shape();
        (r, c)
    }
    fn footprint(&self, view: usize, x: [f64; 3]) -> Option<(f64, f64, f64)> {
        let v = &self.views[view];
        let p = &v.p;
        let w = p[2][0] * x[0] + p[2][1] * x[1] + p[2][2] * x[2] + p[2][3];
        if w <= 0.0 {
            return None;
        }
        let a = (p[0][0] * x[0] + p[0][1] * x[1] + p[0][2] * x[2] + p[0][3]) / w;
        let b = (p[1][0] * x[0] + p[1][1] * x[1] + p[1][2] * x[2] + p[1][3]) / w;
        let weight = match self.weighting {
            VoxelWeighting::Adjoint => {
                let r = ((x[0] - v.source.x).powi(2)
                    + (x[1] - v.source.y).powi(2)
                    + (x[2] - v.source.z).powi(2))
                .sqrt();
                self.geom.volume().voxel_measure() * v.abs_det * r / (w * w * w)
            }
            VoxelWeighting::Fdk => {
                let q = self.geom.sid() / w;
                q * q
            }
        };
        Some((a, b, weight))
    }
}

// ---------------------------------------------------------------------------
// Generic kernels
// ---------------------------------------------------------------------------

fn forward_kernel<M: RayModel>(model: &M, data: &[f32], step: f64) -> Vec<f32> {
    let sampler = VolumeSampler::new(model.volume(), data);
    let (rows, cols) = model.detector();
    let per_view = rows * cols;
    let mut out = vec![0f32; model.n_views() * per_view];
    out.par_chunks_mut(cols)
        .enumerate()
        .for_each(|(line, chunk)| {
            let view = line / rows;
            let row = line % rows;
            for (col, v) in chunk.iter_mut().enumerate() {
                let ray = model.ray(view, row, col);
                *v = sampler.integrate(ray.origin, ray.dir, ray.t0, ray.t1, step) as f32;
            }
        });
    out
}

/// World coordinates of every voxel row: returns (n_rows, row_len, fn(row) -> (y, z), x coords).
struct VoxelGrid {
    nx: usize,
    ny: usize,
    nz: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
}

impl VoxelGrid {
    fn new(v: &VolumeGeometry) -> Self {
        let coords = |axis: usize| -> Vec<f64> {
            (0..v.shape[axis]).map(|i| v.world_coord(axis, i)).collect()
        };
        match v.shape.as_slice() {
            [ny, nx] => Self {
                nx: *nx,
                ny: *ny,
                nz: 1,
                xs: coords(1),
                ys: coords(0),
                zs: vec![0.0],
            },
            [nz, ny, nx] => Self {
                nx: *nx,
                ny: *ny,
                nz: *nz,
                xs: coords(2),
                ys: coords(1),
                zs: coords(0),
            },
            _ => unreachable!("geometries only hold 2D or 3D volumes"),
        }
    }

    fn row_yz(&self, row: usize) -> (f64, f64) {
        (self.ys[row % self.ny], self.zs[row / self.ny])
    }

    fn n_rows(&self) -> usize {
        self.ny * self.nz
    }
}

/// Linear (1D) or bilinear (2D) detector interpolation weights; neighbors
/// outside the detector are dropped.
#[inline]
fn detector_taps(col: f64, row: f64, rows: usize, cols: usize, mut f: impl FnMut(usize, f64)) {
    let c0 = col.floor();
    let wc = col - c0;
    let c0 = c0 as isize;
    let cols_i = cols as isize;
    if rows == 1 {
        if c0 >= 0 && c0 < cols_i {
            f(c0 as usize, 1.0 - wc);
        }
        if c0 + 1 >= 0 && c0 + 1 < cols_i {
            f((c0 + 1) as usize, wc);
        }
        return;
    }
    let r0 = row.floor();
    let wr = row - r0;
    let r0 = r0 as isize;
    let rows_i = rows as isize;
    for (dr, wrow) in [(0isize, 1.0 - wr), (1, wr)] {
        let r = r0 + dr;
        if r < 0 || r >= rows_i {
            continue;
        }
        for (dc, wcol) in [(0isize, 1.0 - wc), (1, wc)] {
            let c = c0 + dc;
            if c < 0 || c >= cols_i {
                continue;
            }
            f(r as usize * cols + c as usize, wrow * wcol);
        }
    }
}

/// Voxel-driven gather: every voxel accumulates interpolated detector values.
fn backproject_kernel<M: VoxelModel>(model: &M, sino: &[f32]) -> Vec<f32> {
    let grid = VoxelGrid::new(model.volume());
    let (rows, cols) = model.detector();
    let per_view = rows * cols;
    let mut out = vec![0f32; grid.nx * grid.n_rows()];
    out.par_chunks_mut(grid.nx)
        .enumerate()
        .for_each(|(r, chunk)| {
            let (y, z) = grid.row_yz(r);
            let mut acc = vec![0f64; grid.nx];
            for view in 0..model.n_views() {
                let det = &sino[view * per_view..(view + 1) * per_view];
                for (ix, a) in acc.iter_mut().enumerate() {
                    if let Some((col, row, w)) = model.footprint(view, [grid.xs[ix], y, z]) {
                        let mut v = 0.0;
                        detector_taps(col, row, rows, cols, |i, t| v += t * det[i] as f64);
                        *a += w * v;
                    }
                }
            }
            for (o, a) in chunk.iter_mut().zip(acc) {
                *o = a as f32;
            }
        });
    out
}

/// Exact transpose of [`backproject_kernel`]: every voxel splats onto the
/// detector with the same interpolation weights.
fn splat_kernel<M: VoxelModel>(model: &M, vol: &[f32]) -> Vec<f32> {
    let grid = VoxelGrid::new(model.volume());
    let (rows, cols) = model.detector();
    let per_view = rows * cols;
    let mut out = vec![0f32; model.n_views() * per_view];
    out.par_chunks_mut(per_view)
        .enumerate()
        .for_each(|(view, det)| {
            let mut acc = vec![0f64; per_view];
            for r in 0..grid.n_rows() {
                let (y, z) = grid.row_yz(r);
                let line = &vol[r * grid.nx..(r + 1) * grid.nx];
                for (ix, &val) in line.iter().enumerate() {
                    if val == 0.0 {
                        continue;
                    }
                    if let Some((col, row, w)) = model.footprint(view, [grid.xs[ix], y, z]) {
                        let scaled = w * val as f64;
                        detector_taps(col, row, rows, cols, |i, t| acc[i] += t * scaled);
                    }
                }
            }
            for (o, a) in det.iter_mut().zip(acc) {
                *o = a as f32;
            }
        });
    out
}

// ---------------------------------------------------------------------------
// Public operators
// ---------------------------------------------------------------------------

fn check_volume(geom: &VolumeGeometry, vol: &Volume) -> Result<()> {
    if vol.geometry() != geom {
        return Err(Error::ShapeMismatch {
            expected: geom.shape.clone(),
            actual: vol.shape().to_vec(),
        });
    }
    Ok(())
}

fn make_sinogram(geom: &Geometry, data: Vec<f32>) -> Sinogram {
    Sinogram::from_data(
        geom.n_projections(),
        geom.detector_shape(),
        geom.detector_spacing(),
        data,
    )
    .expect("kernel output matches geometry")
}

fn make_volume(geom: &VolumeGeometry, data: Vec<f32>) -> Volume {
    Volume::from_data(geom.clone(), data).expect("kernel output matches geometry")
}

fn check_sino(geom: &Geometry, sino: &Sinogram) -> Result<()> {
    geom.check_sinogram(sino)
}

pub fn forward_project_parallel_2d(
    vol: &Volume,
    geom: &GeometryParallel2D,
    cfg: &SamplingConfig,
) -> Result<Sinogram> {
    check_volume(geom.volume(), vol)?;
    let model = ParallelModel::new(geom, true);
    let data = forward_kernel(&model, vol.data(), cfg.step(geom.volume()));
    Ok(make_sinogram(&Geometry::Parallel2D(geom.clone()), data))
}

/// Voxel-driven counterpart of [`forward_project_parallel_2d`], scaled by
/// `voxel area / detector spacing` per view.
pub fn back_project_parallel_2d(sino: &Sinogram, geom: &GeometryParallel2D) -> Result<Volume> {
    backproject_parallel_scaled(sino, geom, true)
}

/// Plain interpolation sum over views (`adjoint_scaled = false`), as used by FBP.
pub(crate) fn backproject_parallel_scaled(
    sino: &Sinogram,
    geom: &GeometryParallel2D,
    adjoint_scaled: bool,
) -> Result<Volume> {
    check_sino(&Geometry::Parallel2D(geom.clone()), sino)?;
    let model = ParallelModel::new(geom, adjoint_scaled);
    Ok(make_volume(geom.volume(), backproject_kernel(&model, sino.data())))
}

pub(crate) fn splat_parallel(
    vol: &Volume,
    geom: &GeometryParallel2D,
    adjoint_scaled: bool,
) -> Result<Sinogram> {
    check_volume(geom.volume(), vol)?;
    let model = ParallelModel::new(geom, adjoint_scaled);
    Ok(make_sinogram(
        &Geometry::Parallel2D(geom.clone()),
        splat_kernel(&model, vol.data()),
    ))
}

pub fn forward_project_fan_2d(
    vol: &Volume,
    geom: &GeometryFan2D,
    cfg: &SamplingConfig,
) -> Result<Sinogram> {
    check_volume(geom.volume(), vol)?;
    let model = FanModel::new(geom, VoxelWeighting::Adjoint);
    let data = forward_kernel(&model, vol.data(), cfg.step(geom.volume()));
    Ok(make_sinogram(&Geometry::Fan2D(geom.clone()), data))
}

/// Voxel-driven fan-beam backprojection.
///
/// With `fdk_weighting == false` every contribution carries the
/// change-of-variables factor `area · sdd · |x - s| / (Δs · w²)`, making
/// this the counterpart of [`forward_project_fan_2d`]. With
/// `fdk_weighting == true` the factor is replaced by `(sid / w)²`, where
/// `w` is the depth of the voxel from the source along the central ray.
pub fn back_project_fan_2d(
    sino: &Sinogram,
    geom: &GeometryFan2D,
    fdk_weighting: bool,
) -> Result<Volume> {
    check_sino(&Geometry::Fan2D(geom.clone()), sino)?;
    let model = FanModel::new(geom, weighting(fdk_weighting));
    Ok(make_volume(geom.volume(), backproject_kernel(&model, sino.data())))
}

pub(crate) fn splat_fan(vol: &Volume, geom: &GeometryFan2D, fdk_weighting: bool) -> Result<Sinogram> {
    check_volume(geom.volume(), vol)?;
    let model = FanModel::new(geom, weighting(fdk_weighting));
    Ok(make_sinogram(
        &Geometry::Fan2D(geom.clone()),
        splat_kernel(&model, vol.data()),
    ))
}

fn weighting(fdk: bool) -> VoxelWeighting {
    if fdk {
        VoxelWeighting::Fdk
    } else {
        VoxelWeighting::Adjoint
    }
}

/// Cone-beam forward projection. The source of each view is the null-space
/// point of its matrix; rays run from the source to the detector pixel.
pub fn forward_project_cone_3d(
    vol: &Volume,
    geom: &GeometryCone3D,
    cfg: &SamplingConfig,
) -> Result<Sinogram> {
    check_volume(geom.volume(), vol)?;
    let model = ConeModel::new(geom, VoxelWeighting::Adjoint)?;
    let data = forward_kernel(&model, vol.data(), cfg.step(geom.volume()));
    Ok(make_sinogram(&Geometry::Cone3D(geom.clone()), data))
}

/// Voxel-driven cone-beam backprojection through the projection matrices.
///
/// For each view `(a, b, w) = P·(x; 1)`; views with `w <= 0` are skipped and
/// the detector image is bilinearly sampled at `(a/w, b/w)`. The weight is
/// `volume · |det M| · |x - s| / w³` without FDK weighting and `(sid / w)²`
/// with it.
pub fn back_project_cone_3d(
    sino: &Sinogram,
    geom: &GeometryCone3D,
    fdk_weighting: bool,
) -> Result<Volume> {
    check_sino(&Geometry::Cone3D(geom.clone()), sino)?;
    let model = ConeModel::new(geom, weighting(fdk_weighting))?;
    Ok(make_volume(geom.volume(), backproject_kernel(&model, sino.data())))
}

pub(crate) fn splat_cone(
    vol: &Volume,
    geom: &GeometryCone3D,
    fdk_weighting: bool,
) -> Result<Sinogram> {
    check_volume(geom.volume(), vol)?;
    let model = ConeModel::new(geom, weighting(fdk_weighting))?;
    Ok(make_sinogram(
        &Geometry::Cone3D(geom.clone()),
        splat_kernel(&model, vol.data()),
    ))
}

/// Forward projection for any geometry.
pub fn forward_project(vol: &Volume, geom: &Geometry, cfg: &SamplingConfig) -> Result<Sinogram> {
    match geom {
        Geometry::Parallel2D(g) => forward_project_parallel_2d(vol, g, cfg),
        Geometry::Fan2D(g) => forward_project_fan_2d(vol, g, cfg),
        Geometry::Cone3D(g) => forward_project_cone_3d(vol, g, cfg),
    }
}

/// Backprojection without FDK weighting for any geometry.
pub fn back_project(sino: &Sinogram, geom: &Geometry) -> Result<Volume> {
    match geom {
        Geometry::Parallel2D(g) => back_project_parallel_2d(sino, g),
        Geometry::Fan2D(g) => back_project_fan_2d(sino, g, false),
        Geometry::Cone3D(g) => back_project_cone_3d(sino, g, false),
    }
}

// ---------------------------------------------------------------------------
// Materialized operators (test scale only)
// ---------------------------------------------------------------------------

/// Largest `rows * cols` accepted by [`materialize_operator`].
pub const MATERIALIZE_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Forward,
    Back,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.data
            .chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        DenseMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Builds the explicit matrix of the forward or back operator column by
/// column from unit impulses.
pub fn materialize_operator(
    geom: &Geometry,
    cfg: &SamplingConfig,
    which: Which,
) -> Result<DenseMatrix> {
    let n_vol = geom.volume().len();
    let n_sino = geom.n_projections() * geom.detector_shape().iter().product::<usize>();
    let (rows, cols) = match which {
        Which::Forward => (n_sino, n_vol),
        Which::Back => (n_vol, n_sino),
    };
    if rows.saturating_mul(cols) > MATERIALIZE_LIMIT {
        return Err(Error::SizeGuard {
            rows,
            cols,
            limit: MATERIALIZE_LIMIT,
        });
    }
    let mut data = vec![0.0; rows * cols];
    for j in 0..cols {
        let column: Vec<f32> = match which {
            Which::Forward => {
                let mut v = geom.empty_volume();
                v.data_mut()[j] = 1.0;
                forward_project(&v, geom, cfg)?.into_data()
            }
            Which::Back => {
                let mut s = geom.empty_sinogram();
                s.data_mut()[j] = 1.0;
                back_project(&s, geom)?.into_data()
            }
        };
        for (i, v) in column.into_iter().enumerate() {
            data[i * cols + j] = v as f64;
        }
    }
    Ok(DenseMatrix { rows, cols, data })
}
