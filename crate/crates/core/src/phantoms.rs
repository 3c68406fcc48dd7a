//! Analytic phantoms: modified Shepp-Logan (2D and 3D), disks and balls.
//!
//! Shepp-Logan phantoms are rasterized by hard point-in-ellipse membership
//! at voxel centers. The phantom lives in normalized coordinates where the
//! grid spans `[-1, 1)` along every axis: voxel `i` of `n` sits at
//! `2 (i - (n-1)/2) / n`. Axis order follows the volume layout, so `x` is
//! the last (fastest) axis and `y` the one before it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grids::{Volume, VolumeGeometry};

/// One ellipse (2D) or ellipsoid (3D) of an additive phantom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidSpec {
    /// (x, y, z) in normalized coordinates
    pub center: [f64; 3],
    /// (a, b, c) along the rotated x, y and the z axis
    pub semi_axes: [f64; 3],
    /// counterclockwise rotation about z, degrees
    pub rotation_deg: f64,
    pub intensity_delta: f64,
}

impl EllipsoidSpec {
    const fn new(delta: f64, axes: [f64; 3], center: [f64; 3], rotation_deg: f64) -> Self {
        Self {
            center,
            semi_axes: axes,
            rotation_deg,
            intensity_delta: delta,
        }
    }

    /// Point-in-ellipse test in the xy-plane (z ignored).
    pub fn contains_2d(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_axes[0]).powi(2) + (v / self.semi_axes[1]).powi(2) <= 1.0
    }

    /// Point-in-ellipsoid test.
    pub fn contains_3d(&self, x: f64, y: f64, z: f64) -> bool {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let dz = z - self.center[2];
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_axes[0]).powi(2)
            + (v / self.semi_axes[1]).powi(2)
            + (dz / self.semi_axes[2]).powi(2)
            <= 1.0
    }
}

// Modified Shepp-Logan ("high contrast" variant, Toft 1996): the original
// Shepp & Logan (1974) geometry with intensities raised for display.
// Columns: intensity, semi-axes (a, b, c), center (x0, y0, z0), phi.
// The 2D table is the z = 0 section of the 3D one with c unused.
// The 3D literature table also lists small tilts of two ellipsoids about
// other axes; only rotation about z is modeled, so those are omitted.
pub const SHEPP_LOGAN_2D: [EllipsoidSpec; 10] = [
    EllipsoidSpec::new(1.0, [0.69, 0.92, 1.0], [0.0, 0.0, 0.0], 0.0),
    EllipsoidSpec::new(-0.8, [0.6624, 0.874, 1.0], [0.0, -0.0184, 0.0], 0.0),
    EllipsoidSpec::new(-0.2, [0.11, 0.31, 1.0], [0.22, 0.0, 0.0], -18.0),
    EllipsoidSpec::new(-0.2, [0.16, 0.41, 1.0], [-0.22, 0.0, 0.0], 18.0),
    EllipsoidSpec::new(0.1, [0.21, 0.25, 1.0], [0.0, 0.35, 0.0], 0.0),
    EllipsoidSpec::new(0.1, [0.046, 0.046, 1.0], [0.0, 0.1, 0.0], 0.0),
    EllipsoidSpec::new(0.1, [0.046, 0.046, 1.0], [0.0, -0.1, 0.0], 0.0),
    EllipsoidSpec::new(0.1, [0.046, 0.023, 1.0], [-0.08, -0.605, 0.0], 0.0),
    EllipsoidSpec::new(0.1, [0.023, 0.023, 1.0], [0.0, -0.606, 0.0], 0.0),
    EllipsoidSpec::new(0.1, [0.023, 0.046, 1.0], [0.06, -0.605, 0.0], 0.0),
];

pub const SHEPP_LOGAN_3D: [EllipsoidSpec; 10] = [
    EllipsoidSpec::new(1.0, [0.69, 0.92, 0.81], [0.0, 0.0, 0.0], 0.0),
    EllipsoidSpec::new(-0.8, [0.6624, 0.874, 0.78], [0.0, -0.0184, 0.0], 0.0),
    EllipsoidSpec::new(-0.2, [0.11, 0.31, 0.22], [0.22, 0.0, 0.0], -18.0),
    EllipsoidSpec::new(-0.2, [0.16, 0.41, 0.28], [-0.22, 0.0, 0.0], 18.0),
    EllipsoidSpec::new(0.1, [0.21, 0.25, 0.41], [0.0, 0.35, -0.15], 0.0),
    EllipsoidSpec::new(0.1, [0.046, 0.046, 0.05], [0.0, 0.1, 0.25], 0.0),
    EllipsoidSpec::new(0.1, [0.046, 0.046, 0.05], [0.0, -0.1, 0.25], 0.0),
    EllipsoidSpec::new(0.1, [0.046, 0.023, 0.05], [-0.08, -0.605, 0.0], 0.0),
    EllipsoidSpec::new(0.1, [0.023, 0.023, 0.02], [0.0, -0.606, 0.0], 0.0),
    EllipsoidSpec::new(0.1, [0.023, 0.046, 0.02], [0.06, -0.605, 0.0], 0.0),
];

/// Minimum voxels per axis for Shepp-Logan rasterization.
pub const MIN_PHANTOM_SIZE: usize = 16;

/// Normalized coordinate of voxel `i` on an axis of `n` voxels.
pub fn normalized_coord(i: usize, n: usize) -> f64 {
    2.0 * (i as f64 - (n as f64 - 1.0) * 0.5) / n as f64
}

fn check_size(geometry: &VolumeGeometry, ndim: usize) -> Result<()> {
    if geometry.ndim() != ndim {
        return Err(Error::invalid(format!(
            "expected a {ndim}D volume, got shape {:?}",
            geometry.shape
        )));
    }
    if geometry.shape.iter().any(|&n| n < MIN_PHANTOM_SIZE) {
        return Err(Error::invalid(format!(
            "phantom needs at least {MIN_PHANTOM_SIZE} voxels per axis, got {:?}",
            geometry.shape
        )));
    }
    Ok(())
}

/// Sum of `intensity_delta` over all ellipses containing the point.
pub fn ellipse_sum_2d(table: &[EllipsoidSpec], x: f64, y: f64) -> f64 {
    table
        .iter()
        .filter(|e| e.contains_2d(x, y))
        .map(|e| e.intensity_delta)
        .sum()
}

pub fn ellipsoid_sum_3d(table: &[EllipsoidSpec], x: f64, y: f64, z: f64) -> f64 {
    table
        .iter()
        .filter(|e| e.contains_3d(x, y, z))
        .map(|e| e.intensity_delta)
        .sum()
}

/// Rasterizes an ellipse table on a 2D grid.
pub fn rasterize_2d(geometry: &VolumeGeometry, table: &[EllipsoidSpec]) -> Result<Volume> {
    if geometry.ndim() != 2 {
        return Err(Error::invalid("rasterize_2d needs a 2D volume"));
    }
    let (ny, nx) = (geometry.shape[0], geometry.shape[1]);
    let mut data = vec![0f32; ny * nx];
    data.par_chunks_mut(nx).enumerate().for_each(|(iy, row)| {
        let y = normalized_coord(iy, ny);
        for (ix, v) in row.iter_mut().enumerate() {
            *v = ellipse_sum_2d(table, normalized_coord(ix, nx), y) as f32;
        }
    });
    Volume::from_data(geometry.clone(), data)
}

/// Rasterizes an ellipsoid table on a 3D grid.
pub fn rasterize_3d(geometry: &VolumeGeometry, table: &[EllipsoidSpec]) -> Result<Volume> {
    if geometry.ndim() != 3 {
        return Err(Error::invalid("rasterize_3d needs a 3D volume"));
    }
    let (nz, ny, nx) = (geometry.shape[0], geometry.shape[1], geometry.shape[2]);
    let mut data = vec![0f32; nz * ny * nx];
    data.par_chunks_mut(nx).enumerate().for_each(|(r, row)| {
        let z = normalized_coord(r / ny, nz);
        let y = normalized_coord(r % ny, ny);
        for (ix, v) in row.iter_mut().enumerate() {
            *v = ellipsoid_sum_3d(table, normalized_coord(ix, nx), y, z) as f32;
        }
    });
    Volume::from_data(geometry.clone(), data)
}

pub fn shepp_logan_2d(geometry: &VolumeGeometry) -> Result<Volume> {
    check_size(geometry, 2)?;
    rasterize_2d(geometry, &SHEPP_LOGAN_2D)
}

pub fn shepp_logan_3d(geometry: &VolumeGeometry) -> Result<Volume> {
    check_size(geometry, 3)?;
    rasterize_3d(geometry, &SHEPP_LOGAN_3D)
}

/// Centered disk (2D) in world units: voxel = `value` iff its center lies
/// within `radius_mm` of the isocenter.
pub fn disk_phantom(geometry: &VolumeGeometry, radius_mm: f64, value: f32) -> Result<Volume> {
    if geometry.ndim() != 2 {
        return Err(Error::invalid("disk_phantom needs a 2D volume"));
    }
    centered_solid(geometry, radius_mm, value, 1)
}

/// Centered ball (3D); see [`disk_phantom`].
pub fn ball_phantom(geometry: &VolumeGeometry, radius_mm: f64, value: f32) -> Result<Volume> {
    if geometry.ndim() != 3 {
        return Err(Error::invalid("ball_phantom needs a 3D volume"));
    }
    centered_solid(geometry, radius_mm, value, 1)
}

/// Centered disk (2D) or ball (3D) with partial-volume edges: each voxel
/// holds `value` times the fraction of its `supersample^ndim` sub-voxel
/// centers inside the radius.
pub fn partial_volume_solid(
    geometry: &VolumeGeometry,
    radius_mm: f64,
    value: f32,
    supersample: usize,
) -> Result<Volume> {
    if supersample == 0 {
        return Err(Error::invalid("supersample must be at least 1"));
    }
    centered_solid(geometry, radius_mm, value, supersample)
}

fn centered_solid(
    geometry: &VolumeGeometry,
    radius_mm: f64,
    value: f32,
    supersample: usize,
) -> Result<Volume> {
    if !(radius_mm > 0.0 && radius_mm.is_finite()) || !value.is_finite() {
        return Err(Error::invalid(format!(
            "radius must be positive and value finite, got {radius_mm}, {value}"
        )));
    }
    let ndim = geometry.ndim();
    let nx = geometry.shape[ndim - 1];
    let ny = geometry.shape[ndim - 2];
    let r2 = radius_mm * radius_mm;
    // sub-voxel offsets in units of spacing
    let offsets: Vec<f64> = (0..supersample)
        .map(|k| (k as f64 + 0.5) / supersample as f64 - 0.5)
        .collect();
    let zoffsets: &[f64] = if ndim == 3 { &offsets } else { &[0.0] };
    let sx = geometry.spacing[ndim - 1];
    let sy = geometry.spacing[ndim - 2];
    let sz = if ndim == 3 { geometry.spacing[0] } else { 0.0 };
    let total = (offsets.len() * offsets.len() * zoffsets.len()) as f32;
    let mut data = vec![0f32; geometry.len()];
    data.par_chunks_mut(nx).enumerate().for_each(|(r, row)| {
        let y = geometry.world_coord(ndim - 2, r % ny);
        let z = if ndim == 3 {
            geometry.world_coord(0, r / ny)
        } else {
            0.0
        };
        for (ix, v) in row.iter_mut().enumerate() {
            let x = geometry.world_coord(ndim - 1, ix);
            let mut inside = 0usize;
            for oz in zoffsets {
                let zz = z + oz * sz;
                for oy in &offsets {
                    let yy = y + oy * sy;
                    for ox in &offsets {
                        let xx = x + ox * sx;
                        inside += usize::from(xx * xx + yy * yy + zz * zz <= r2);
                    }
                }
            }
            if inside > 0 {
                *v = value * inside as f32 / total;
            }
        }
    });
    Volume::from_data(geometry.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vg(shape: &[usize]) -> VolumeGeometry {
        VolumeGeometry::new(shape.to_vec(), vec![1.0; shape.len()]).unwrap()
    }

    // independent membership oracle: explicit quadratic form, no shared helpers
    fn oracle_2d(x: f64, y: f64) -> f64 {
        let table: [(f64, f64, f64, f64, f64, f64); 10] = [
            (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
            (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
            (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
            (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
            (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
            (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
            (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
            (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
            (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
            (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
        ];
        let mut sum = 0.0;
        for (a, sa, sb, x0, y0, phi) in table {
            let t = phi * std::f64::consts::PI / 180.0;
            let (px, py) = (x - x0, y - y0);
            // rotate the point by -phi into the ellipse frame
            let xr = px * t.cos() + py * t.sin();
            let yr = py * t.cos() - px * t.sin();
            if xr * xr / (sa * sa) + yr * yr / (sb * sb) <= 1.0 {
                sum += a;
            }
        }
        sum
    }

    #[test]
    fn background_is_zero() {
        let p = shepp_logan_2d(&vg(&[64, 64])).unwrap();
        assert_eq!(p.get(&[0, 0]), 0.0);
        assert_eq!(p.get(&[63, 0]), 0.0);
        let p = shepp_logan_3d(&vg(&[32, 32, 32])).unwrap();
        assert_eq!(p.get(&[0, 0, 0]), 0.0);
        assert_eq!(p.get(&[16, 16, 0]), 0.0);
    }

    #[test]
    fn matches_membership_oracle_everywhere() {
        let n = 96;
        let p = shepp_logan_2d(&vg(&[n, n])).unwrap();
        for iy in 0..n {
            for ix in 0..n {
                let want = oracle_2d(normalized_coord(ix, n), normalized_coord(iy, n));
                assert_eq!(p.get(&[iy, ix]), want as f32, "({iy},{ix})");
            }
        }
    }

    fn mirrored(table: &[EllipsoidSpec]) -> Vec<EllipsoidSpec> {
        table
            .iter()
            .map(|e| EllipsoidSpec {
                center: [-e.center[0], e.center[1], e.center[2]],
                rotation_deg: -e.rotation_deg,
                ..*e
            })
            .collect()
    }

    #[test]
    fn table_is_not_mirror_symmetric() {
        // the two large inner ellipses differ in size, as do the two small
        // off-axis ones near the bottom
        let m = mirrored(&SHEPP_LOGAN_2D);
        assert!(m.iter().any(|e| !SHEPP_LOGAN_2D.contains(e)));
    }

    #[test]
    fn rasterization_is_mirror_equivariant() {
        // flipping x of the phantom equals rasterizing the mirrored table
        for n in [64, 65] {
            let g = vg(&[n, n]);
            let p = shepp_logan_2d(&g).unwrap();
            let q = rasterize_2d(&g, &mirrored(&SHEPP_LOGAN_2D)).unwrap();
            for iy in 0..n {
                for ix in 0..n {
                    assert_eq!(p.get(&[iy, ix]), q.get(&[iy, n - 1 - ix]), "({iy},{ix})");
                }
            }
        }
        let g = vg(&[24, 24, 24]);
        let p = shepp_logan_3d(&g).unwrap();
        let q = rasterize_3d(&g, &mirrored(&SHEPP_LOGAN_3D)).unwrap();
        for iz in 0..24 {
            for iy in 0..24 {
                for ix in 0..24 {
                    assert_eq!(p.get(&[iz, iy, ix]), q.get(&[iz, iy, 23 - ix]));
                }
            }
        }
    }

    #[test]
    fn central_slice_of_3d_resembles_2d() {
        let n = 64;
        let p3 = shepp_logan_3d(&vg(&[n, n, n])).unwrap();
        let p2 = shepp_logan_2d(&vg(&[n, n])).unwrap();
        // z = 0 lies between slices n/2-1 and n/2; compare with the nearer one
        let z = n / 2;
        let mut diff = 0usize;
        for iy in 0..n {
            for ix in 0..n {
                if p3.get(&[z, iy, ix]) != p2.get(&[iy, ix]) {
                    diff += 1;
                }
            }
        }
        // the ellipsoid at z0 = 0.25 and the slab ellipsoid at z0 = -0.15 differ
        assert!(diff < n * n / 10, "{diff}");
    }

    #[test]
    fn values_within_partial_sum_range() {
        let p = shepp_logan_2d(&vg(&[128, 128])).unwrap();
        let deltas: Vec<f64> = SHEPP_LOGAN_2D.iter().map(|e| e.intensity_delta).collect();
        let lo: f64 = deltas.iter().filter(|d| **d < 0.0).sum();
        let hi: f64 = deltas.iter().filter(|d| **d > 0.0).sum();
        assert!(p.data().iter().all(|&v| (v as f64) >= lo - 1e-6 && (v as f64) <= hi + 1e-6));
    }

    #[test]
    fn resolution_consistency() {
        let fine = shepp_logan_2d(&vg(&[512, 512])).unwrap();
        let coarse = shepp_logan_2d(&vg(&[256, 256])).unwrap();
        let mut mad = 0.0;
        for iy in 0..256 {
            for ix in 0..256 {
                let avg = (fine.get(&[2 * iy, 2 * ix])
                    + fine.get(&[2 * iy, 2 * ix + 1])
                    + fine.get(&[2 * iy + 1, 2 * ix])
                    + fine.get(&[2 * iy + 1, 2 * ix + 1])) as f64
                    / 4.0;
                mad += (avg - coarse.get(&[iy, ix]) as f64).abs();
            }
        }
        mad /= 256.0 * 256.0;
        assert!(mad < 0.02, "{mad}");
    }

    #[test]
    fn too_small_rejected() {
        assert!(shepp_logan_2d(&vg(&[15, 64])).is_err());
        assert!(shepp_logan_3d(&vg(&[64, 64])).is_err());
    }

    #[test]
    fn disk_basics() {
        let g = VolumeGeometry::new(vec![256, 256], vec![1.0, 1.0]).unwrap();
        let d = disk_phantom(&g, 60.0, 2.0).unwrap();
        assert_eq!(d.get(&[128, 128]), 2.0);
        assert_eq!(d.get(&[128, 250]), 0.0);
        let area = d.data().iter().filter(|&&v| v != 0.0).count() as f64;
        let exact = std::f64::consts::PI * 3600.0;
        assert!((area - exact).abs() / exact < 0.02);
    }

    #[test]
    fn ball_basics() {
        let g = VolumeGeometry::new(vec![33, 33, 33], vec![2.0; 3]).unwrap();
        let b = ball_phantom(&g, 20.0, 1.0).unwrap();
        assert_eq!(b.get(&[16, 16, 16]), 1.0);
        assert_eq!(b.get(&[16, 16, 28]), 0.0);
        assert_eq!(b.get(&[16, 16, 26]), 1.0);
        assert!(ball_phantom(&VolumeGeometry::new(vec![8, 8], vec![1.0; 2]).unwrap(), 1.0, 1.0).is_err());
    }

    #[test]
    fn partial_volume_solids() {
        let g = VolumeGeometry::new(vec![64, 64], vec![0.5, 0.5]).unwrap();
        assert_eq!(
            partial_volume_solid(&g, 10.0, 2.0, 1).unwrap(),
            disk_phantom(&g, 10.0, 2.0).unwrap()
        );
        let d = partial_volume_solid(&g, 10.3, 1.0, 16).unwrap();
        let area: f64 = d.data().iter().map(|v| *v as f64).sum::<f64>() * 0.25;
        let exact = std::f64::consts::PI * 10.3 * 10.3;
        assert!((area - exact).abs() / exact < 1e-3, "{area} vs {exact}");
        assert!(d.data().iter().any(|v| *v > 0.0 && *v < 1.0));

        let g3 = VolumeGeometry::new(vec![24, 24, 24], vec![1.0; 3]).unwrap();
        let b = partial_volume_solid(&g3, 8.0, 1.0, 6).unwrap();
        let vol: f64 = b.data().iter().map(|v| *v as f64).sum();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 512.0;
        assert!((vol - exact).abs() / exact < 5e-3, "{vol} vs {exact}");
        assert!(partial_volume_solid(&g3, 8.0, 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn random_voxels_match_3d_oracle(iz in 0usize..40, iy in 0usize..40, ix in 0usize..40) {
            let n = 40;
            thread_local! {
                static P: Volume = shepp_logan_3d(&VolumeGeometry::new(vec![40; 3], vec![1.0; 3]).unwrap()).unwrap();
            }
            let (x, y, z) = (normalized_coord(ix, n), normalized_coord(iy, n), normalized_coord(iz, n));
            let mut want = 0.0;
            let c = [0.81, 0.78, 0.22, 0.28, 0.41, 0.05, 0.05, 0.05, 0.02, 0.02];
            let z0 = [0.0, 0.0, 0.0, 0.0, -0.15, 0.25, 0.25, 0.0, 0.0, 0.0];
            for (k, e) in SHEPP_LOGAN_2D.iter().enumerate() {
                let t = e.rotation_deg.to_radians();
                let (px, py, pz) = (x - e.center[0], y - e.center[1], z - z0[k]);
                let xr = px * t.cos() + py * t.sin();
                let yr = py * t.cos() - px * t.sin();
                if (xr / e.semi_axes[0]).powi(2) + (yr / e.semi_axes[1]).powi(2) + (pz / c[k]).powi(2) <= 1.0 {
                    want += e.intensity_delta;
                }
            }
            let got = P.with(|p| p.get(&[iz, iy, ix]));
            prop_assert_eq!(got, want as f32);
        }
    }
}
