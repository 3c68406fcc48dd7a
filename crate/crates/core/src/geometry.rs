//! Acquisition geometries, trajectories and projection matrices.
//!
//! Convention: at angle `θ = 0` the source sits on the `+x` axis, the
//! gantry rotates counterclockwise about `+z`, and the cone-beam detector
//! `v` axis points along `+z`. The principal point of a pose-built matrix
//! is the detector center pixel `((cols-1)/2, (rows-1)/2)`; detector
//! offsets are expressed by moving `detector_center`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Rotation3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{Sinogram, Volume, VolumeGeometry};

const UNIT_TOL: f64 = 1e-9;

/// Equispaced angles `i * angular_range / n` for `i in 0..n` (endpoint excluded).
pub fn circular_trajectory_2d(n_projections: usize, angular_range: f64) -> Result<Vec<f64>> {
    if n_projections == 0 {
        return Err(Error::invalid("number_of_projections must be at least 1"));
    }
    if !(angular_range.is_finite() && angular_range > 0.0) {
        return Err(Error::invalid(format!(
            "angular_range must be positive and finite, got {angular_range}"
        )));
    }
    let step = angular_range / n_projections as f64;
    Ok((0..n_projections).map(|i| i as f64 * step).collect())
}

fn validate_angles(angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        return Err(Error::invalid("at least one projection angle is required"));
    }
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::invalid("projection angles must be finite"));
    }
    Ok(())
}

fn validate_detector_1d(width: usize, spacing: f64) -> Result<()> {
    if width == 0 {
        return Err(Error::invalid("detector width must be at least one pixel"));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::invalid(format!(
            "detector spacing must be positive, got {spacing}"
        )));
    }
    Ok(())
}

fn validate_distances(sdd: f64, sid: f64) -> Result<()> {
    if !(sid.is_finite() && sdd.is_finite() && 0.0 < sid && sid < sdd) {
        return Err(Error::invalid(format!(
            "need 0 < sid < sdd, got sid = {sid}, sdd = {sdd}"
        )));
    }
    Ok(())
}

/// 2D parallel-beam geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryParallel2D {
    volume: VolumeGeometry,
    detector_width: usize,
    detector_spacing: f64,
    angles: Vec<f64>,
}

impl GeometryParallel2D {
    pub fn new(
        volume: VolumeGeometry,
        detector_width: usize,
        detector_spacing: f64,
        angles: Vec<f64>,
    ) -> Result<Self> {
        if volume.ndim() != 2 {
            return Err(Error::invalid(format!(
                "parallel-beam geometry needs a 2D volume, got shape {:?}",
                volume.shape
            )));
        }
        validate_detector_1d(detector_width, detector_spacing)?;
        validate_angles(&angles)?;
        Ok(Self {
            volume,
            detector_width,
            detector_spacing,
            angles,
        })
    }

    pub fn volume(&self) -> &VolumeGeometry {
        &self.volume
    }
    pub fn detector_width(&self) -> usize {
        self.detector_width
    }
    pub fn detector_spacing(&self) -> f64 {
        self.detector_spacing
    }
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
    pub fn n_projections(&self) -> usize {
        self.angles.len()
    }
}

/// 2D fan-beam geometry with a flat detector.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryFan2D {
    volume: VolumeGeometry,
    detector_width: usize,
    detector_spacing: f64,
    angles: Vec<f64>,
    sdd: f64,
    sid: f64,
}

impl GeometryFan2D {
    pub fn new(
        volume: VolumeGeometry,
        detector_width: usize,
        detector_spacing: f64,
        angles: Vec<f64>,
        sdd: f64,
        sid: f64,
    ) -> Result<Self> {
        if volume.ndim() != 2 {
            return Err(Error::invalid(format!(
                "fan-beam geometry needs a 2D volume, got shape {:?}",
                volume.shape
            )));
        }
        validate_detector_1d(detector_width, detector_spacing)?;
        validate_angles(&angles)?;
        validate_distances(sdd, sid)?;
        Ok(Self {
            volume,
            detector_width,
            detector_spacing,
            angles,
            sdd,
            sid,
        })
    }

    pub fn volume(&self) -> &VolumeGeometry {
        &self.volume
    }
    pub fn detector_width(&self) -> usize {
        self.detector_width
    }
    pub fn detector_spacing(&self) -> f64 {
        self.detector_spacing
    }
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
    pub fn n_projections(&self) -> usize {
        self.angles.len()
    }
    /// Source to detector distance (mm).
    pub fn sdd(&self) -> f64 {
        self.sdd
    }
    /// Source to isocenter distance (mm).
    pub fn sid(&self) -> f64 {
        self.sid
    }
}

/// Placement of source and detector for one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    source_position: Vector3<f64>,
    detector_center: Vector3<f64>,
    u_dir: Vector3<f64>,
    v_dir: Vector3<f64>,
}

impl Pose {
    /// `u_dir` runs along detector columns (increasing column index),
    /// `v_dir` along rows. Both must be unit length and orthogonal.
    pub fn new(
        source_position: Vector3<f64>,
        detector_center: Vector3<f64>,
        u_dir: Vector3<f64>,
        v_dir: Vector3<f64>,
    ) -> Result<Self> {
        let bad = |reason: String| Error::DegeneratePose {
            index: None,
            reason,
        };
        let finite = [source_position, detector_center, u_dir, v_dir]
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()));
        if !finite {
            return Err(bad("pose contains non-finite coordinates".into()));
        }
        if (u_dir.norm() - 1.0).abs() > UNIT_TOL || (v_dir.norm() - 1.0).abs() > UNIT_TOL {
            return Err(bad(format!(
                "detector directions must be unit vectors (|u| = {}, |v| = {})",
                u_dir.norm(),
                v_dir.norm()
            )));
        }
        if u_dir.dot(&v_dir).abs() > UNIT_TOL {
            return Err(bad(format!(
                "detector directions must be orthogonal (u·v = {})",
                u_dir.dot(&v_dir)
            )));
        }
        let pose = Self {
            source_position,
            detector_center,
            u_dir,
            v_dir,
        };
        if pose.source_detector_depth().abs() < UNIT_TOL {
            return Err(bad("source lies on the detector plane".into()));
        }
        Ok(pose)
    }

    /// Pose of a circular trajectory at angle `theta`.
    pub fn circular(theta: f64, sdd: f64, sid: f64) -> Result<Self> {
        validate_distances(sdd, sid)?;
        let (s, c) = theta.sin_cos();
        let radial = Vector3::new(c, s, 0.0);
        Self::new(
            radial * sid,
            -radial * (sdd - sid),
            Vector3::new(-s, c, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        )
    }

    pub fn source_position(&self) -> Vector3<f64> {
        self.source_position
    }
    pub fn detector_center(&self) -> Vector3<f64> {
        self.detector_center
    }
    pub fn u_dir(&self) -> Vector3<f64> {
        self.u_dir
    }
    pub fn v_dir(&self) -> Vector3<f64> {
        self.v_dir
    }

    /// Signed distance from the source to the detector plane along `u × v`.
    fn source_detector_depth(&self) -> f64 {
        (self.detector_center - self.source_position).dot(&self.u_dir.cross(&self.v_dir))
    }

    /// Applies a rigid rotation about the origin to every component.
    pub fn rotated(&self, rotation: &Rotation3<f64>) -> Self {
        Self {
            source_position: rotation * self.source_position,
            detector_center: rotation * self.detector_center,
            u_dir: rotation * self.u_dir,
            v_dir: rotation * self.v_dir,
        }
    }
}

/// 3×4 homogeneous world → detector-pixel mapping, stored in normalized
/// form: the first three entries of the third row form a unit vector, so
/// the third homogeneous coordinate of `P·(x;1)` is the metric depth of
/// `x` along the principal axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix {
    m: Matrix3x4<f64>,
}

impl ProjectionMatrix {
    /// Builds a matrix from 12 row-major entries and normalizes it. The
    /// overall sign is chosen so the isocenter has non-negative depth.
    pub fn from_row_major(entries: &[f64]) -> Result<Self> {
        if entries.len() != 12 {
            return Err(Error::Format(format!(
                "a projection matrix needs 12 entries, got {}",
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::Format("projection matrix has non-finite entries".into()));
        }
        let m = Matrix3x4::from_row_slice(entries);
        let sign = if m[(2, 3)] < 0.0 { -1.0 } else { 1.0 };
        Self::normalized(m, sign)
    }

    /// Scales `m` by `sign / |third row direction|`.
    fn normalized(m: Matrix3x4<f64>, sign: f64) -> Result<Self> {
        let scale = Vector3::new(m[(2, 0)], m[(2, 1)], m[(2, 2)]).norm();
        let svd = m.svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if scale == 0.0 || !(smax > 0.0) || smin <= 1e-12 * smax {
            return Err(Error::DegenerateGeometry(
                "projection matrix is rank deficient".into(),
            ));
        }
        if sign > 0.0 && (scale - 1.0).abs() < 4.0 * f64::EPSILON {
            // already normalized; keep the entries bit-exact
            return Ok(Self { m });
        }
        Ok(Self {
            m: m * (sign / scale),
        })
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..4 {
                out[r * 4 + c] = self.m[(r, c)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.m
    }

    /// Left 3×3 block.
    pub fn m3(&self) -> Matrix3<f64> {
        self.m.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Homogeneous image of a world point: `(w·col, w·row, w)`.
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.m * Vector4::new(x.x, x.y, x.z, 1.0)
    }

    /// Pixel coordinates `(col, row)` of `x`, or `None` on the source plane.
    pub fn pixel(&self, x: &Vector3<f64>) -> Option<(f64, f64)> {
        let h = self.apply(x);
        (h.z != 0.0).then(|| (h.x / h.z, h.y / h.z))
    }

    /// Center of projection: the affine null-space point of the matrix.
    pub fn source_position(&self) -> Result<Vector3<f64>> {
        let inv = self.m3().try_inverse().ok_or_else(|| {
            Error::DegenerateGeometry("projection matrix has a singular 3x3 block".into())
        })?;
        let p4 = Vector3::new(self.m[(0, 3)], self.m[(1, 3)], self.m[(2, 3)]);
        Ok(-(inv * p4))
    }

    /// Unit principal-axis direction (third row).
    pub fn principal_axis(&self) -> Vector3<f64> {
        Vector3::new(self.m[(2, 0)], self.m[(2, 1)], self.m[(2, 2)])
    }
}

/// Projection matrix of `pose` for a detector of `[rows, cols]` pixels with
/// `[row_spacing, col_spacing]` in mm.
///
/// With `n = u × v` oriented so that `D = (c - s)·n > 0`:
///
/// ```text
/// row1 = (D/Δu)·u + (c_u - ((c - s)·u)/Δu)·n
/// row2 = (D/Δv)·v + (c_v - ((c - s)·v)/Δv)·n
/// row3 = n
/// P    = [M | -M·s]
/// ```
pub fn pose_to_projection_matrix(
    pose: &Pose,
    detector_shape: [usize; 2],
    detector_spacing: [f64; 2],
) -> Result<ProjectionMatrix> {
    let [rows, cols] = detector_shape;
    let [dv, du] = detector_spacing;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "detector shape {detector_shape:?} has a zero axis"
        )));
    }
    if !(du > 0.0 && dv > 0.0 && du.is_finite() && dv.is_finite()) {
        return Err(Error::invalid(format!(
            "detector spacing {detector_spacing:?} must be positive"
        )));
    }
    let s = pose.source_position;
    let c = pose.detector_center;
    let mut n = pose.u_dir.cross(&pose.v_dir);
    let mut depth = (c - s).dot(&n);
    if depth.abs() < UNIT_TOL {
        return Err(Error::DegeneratePose {
            index: None,
            reason: "ray is parallel to the detector plane".into(),
        });
    }
    if depth < 0.0 {
        n = -n;
        depth = -depth;
    }
    let cu = (cols as f64 - 1.0) * 0.5;
    let cv = (rows as f64 - 1.0) * 0.5;
    let r1 = pose.u_dir * (depth / du) + n * (cu - (c - s).dot(&pose.u_dir) / du);
    let r2 = pose.v_dir * (depth / dv) + n * (cv - (c - s).dot(&pose.v_dir) / dv);
    let m3 = Matrix3::from_rows(&[r1.transpose(), r2.transpose(), n.transpose()]);
    let t = -(m3 * s);
    let mut m = Matrix3x4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&m3);
    m.set_column(3, &t);
    // n is unit only up to rounding; renormalize so a saved matrix reloads unchanged
    ProjectionMatrix::normalized(m, 1.0)
}

/// Circular cone-beam trajectory: view `i` is the `θ = 0` pose rotated
/// about `+z` by `i · angular_range / n`.
pub fn circular_trajectory_3d(
    n_projections: usize,
    angular_range: f64,
    sdd: f64,
    sid: f64,
    detector_shape: [usize; 2],
    detector_spacing: [f64; 2],
) -> Result<Vec<ProjectionMatrix>> {
    // validates n and range
    circular_trajectory_2d(n_projections, angular_range)?;
    let step = angular_range / n_projections as f64;
    let start = Pose::circular(0.0, sdd, sid)?;
    (0..n_projections)
        .map(|i| {
            let rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), i as f64 * step);
            pose_to_projection_matrix(&start.rotated(&rotation), detector_shape, detector_spacing)
        })
        .collect()
}

/// One matrix per pose, in order.
pub fn trajectory_from_poses(
    poses: &[Pose],
    detector_shape: [usize; 2],
    detector_spacing: [f64; 2],
) -> Result<Vec<ProjectionMatrix>> {
    if poses.is_empty() {
        return Err(Error::invalid("trajectory needs at least one pose"));
    }
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            pose_to_projection_matrix(p, detector_shape, detector_spacing).map_err(|e| match e {
                Error::DegeneratePose { reason, .. } => Error::DegeneratePose {
                    index: Some(i),
                    reason,
                },
                other => other,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    matrices: Vec<Vec<f64>>,
}

/// Reads `{"matrices": [[12 numbers row-major], ...]}` and normalizes each matrix.
pub fn load_projection_matrices(path: impl AsRef<Path>) -> Result<Vec<ProjectionMatrix>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    parse_projection_matrices(&text)
}

pub fn parse_projection_matrices(text: &str) -> Result<Vec<ProjectionMatrix>> {
    let file: MatrixFile =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("matrix JSON: {e}")))?;
    if file.matrices.is_empty() {
        return Err(Error::Format("matrix file lists no matrices".into()));
    }
    file.matrices
        .iter()
        .enumerate()
        .map(|(i, m)| {
            ProjectionMatrix::from_row_major(m).map_err(|e| Error::Format(format!("matrix {i}: {e}")))
        })
        .collect()
}

pub fn projection_matrices_to_json(matrices: &[ProjectionMatrix]) -> String {
    let file = MatrixFile {
        matrices: matrices.iter().map(|m| m.to_row_major().to_vec()).collect(),
    };
    serde_json::to_string_pretty(&file).expect("matrix file serializes")
}

pub fn save_projection_matrices(
    path: impl AsRef<Path>,
    matrices: &[ProjectionMatrix],
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, projection_matrices_to_json(matrices)).map_err(|e| Error::io(path, e))
}

/// 3D cone-beam geometry driven by one projection matrix per view.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryCone3D {
    volume: VolumeGeometry,
    detector_shape: [usize; 2],
    detector_spacing: [f64; 2],
    matrices: Vec<ProjectionMatrix>,
    sdd: f64,
    sid: f64,
}

impl GeometryCone3D {
    pub fn new(
        volume: VolumeGeometry,
        detector_shape: [usize; 2],
        detector_spacing: [f64; 2],
        matrices: Vec<ProjectionMatrix>,
        sdd: f64,
        sid: f64,
    ) -> Result<Self> {
        if volume.ndim() != 3 {
            return Err(Error::invalid(format!(
                "cone-beam geometry needs a 3D volume, got shape {:?}",
                volume.shape
            )));
        }
        if detector_shape.contains(&0) {
            return Err(Error::invalid(format!(
                "detector shape {detector_shape:?} has a zero axis"
            )));
        }
        if detector_spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid(format!(
                "detector spacing {detector_spacing:?} must be positive"
            )));
        }
        if matrices.is_empty() {
            return Err(Error::invalid("cone-beam geometry needs at least one matrix"));
        }
        validate_distances(sdd, sid)?;
        for (i, m) in matrices.iter().enumerate() {
            m.source_position()
                .map_err(|e| Error::DegenerateGeometry(format!("matrix {i}: {e}")))?;
        }
        Ok(Self {
            volume,
            detector_shape,
            detector_spacing,
            matrices,
            sdd,
            sid,
        })
    }

    /// Circular trajectory geometry.
    pub fn circular(
        volume: VolumeGeometry,
        detector_shape: [usize; 2],
        detector_spacing: [f64; 2],
        n_projections: usize,
        angular_range: f64,
        sdd: f64,
        sid: f64,
    ) -> Result<Self> {
        let matrices = circular_trajectory_3d(
            n_projections,
            angular_range,
            sdd,
            sid,
            detector_shape,
            detector_spacing,
        )?;
        Self::new(volume, detector_shape, detector_spacing, matrices, sdd, sid)
    }

    pub fn volume(&self) -> &VolumeGeometry {
        &self.volume
    }
    /// `[rows, cols]`
    pub fn detector_shape(&self) -> [usize; 2] {
        self.detector_shape
    }
    /// `[row spacing, column spacing]` in mm.
    pub fn detector_spacing(&self) -> [f64; 2] {
        self.detector_spacing
    }
    pub fn matrices(&self) -> &[ProjectionMatrix] {
        &self.matrices
    }
    pub fn n_projections(&self) -> usize {
        self.matrices.len()
    }
    pub fn sdd(&self) -> f64 {
        self.sdd
    }
    pub fn sid(&self) -> f64 {
        self.sid
    }

    /// Gantry angle of each view, read from the source position in the xy-plane.
    pub fn angles(&self) -> Vec<f64> {
        self.matrices
            .iter()
            .map(|m| {
                let s = m.source_position().expect("validated at construction");
                s.y.atan2(s.x).rem_euclid(2.0 * PI)
            })
            .collect()
    }
}

/// Any of the three supported geometries.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Parallel2D(GeometryParallel2D),
    Fan2D(GeometryFan2D),
    Cone3D(GeometryCone3D),
}

impl Geometry {
    pub fn volume(&self) -> &VolumeGeometry {
        match self {
            Geometry::Parallel2D(g) => g.volume(),
            Geometry::Fan2D(g) => g.volume(),
            Geometry::Cone3D(g) => g.volume(),
        }
    }

    pub fn n_projections(&self) -> usize {
        match self {
            Geometry::Parallel2D(g) => g.n_projections(),
            Geometry::Fan2D(g) => g.n_projections(),
            Geometry::Cone3D(g) => g.n_projections(),
        }
    }

    pub fn detector_shape(&self) -> Vec<usize> {
        match self {
            Geometry::Parallel2D(g) => vec![g.detector_width()],
            Geometry::Fan2D(g) => vec![g.detector_width()],
            Geometry::Cone3D(g) => g.detector_shape().to_vec(),
        }
    }

    pub fn detector_spacing(&self) -> Vec<f64> {
        match self {
            Geometry::Parallel2D(g) => vec![g.detector_spacing()],
            Geometry::Fan2D(g) => vec![g.detector_spacing()],
            Geometry::Cone3D(g) => g.detector_spacing().to_vec(),
        }
    }

    /// Gantry angle of every view.
    pub fn angles(&self) -> Vec<f64> {
        match self {
            Geometry::Parallel2D(g) => g.angles().to_vec(),
            Geometry::Fan2D(g) => g.angles().to_vec(),
            Geometry::Cone3D(g) => g.angles(),
        }
    }

    pub fn empty_sinogram(&self) -> Sinogram {
        Sinogram::zeros(
            self.n_projections(),
            self.detector_shape(),
            self.detector_spacing(),
        )
        .expect("geometry was validated")
    }

    pub fn empty_volume(&self) -> Volume {
        Volume::zeros(self.volume().clone())
    }

    pub fn check_volume(&self, vol: &Volume) -> Result<()> {
        if vol.geometry() != self.volume() {
            return Err(Error::ShapeMismatch {
                expected: self.volume().shape.clone(),
                actual: vol.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn check_sinogram(&self, sino: &Sinogram) -> Result<()> {
        let expected: Vec<usize> = std::iter::once(self.n_projections())
            .chain(self.detector_shape())
            .collect();
        if sino.shape() != expected || sino.detector_spacing() != self.detector_spacing().as_slice()
        {
            return Err(Error::ShapeMismatch {
                expected,
                actual: sino.shape(),
            });
        }
        Ok(())
    }
}

impl From<GeometryParallel2D> for Geometry {
    fn from(g: GeometryParallel2D) -> Self {
        Geometry::Parallel2D(g)
    }
}
impl From<GeometryFan2D> for Geometry {
    fn from(g: GeometryFan2D) -> Self {
        Geometry::Fan2D(g)
    }
}
impl From<GeometryCone3D> for Geometry {
    fn from(g: GeometryCone3D) -> Self {
        Geometry::Cone3D(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const SHAPE: [usize; 2] = [40, 60];
    const SPACING: [f64; 2] = [0.8, 1.2];

    /// Independent oracle: intersect the ray source→x with the detector
    /// plane and convert the hit point to (col, row) pixel coordinates.
    fn pixel_by_intersection(pose: &Pose, x: &Vector3<f64>) -> (f64, f64) {
        let s = pose.source_position();
        let c = pose.detector_center();
        let n = pose.u_dir().cross(&pose.v_dir());
        let dir = x - s;
        let t = (c - s).dot(&n) / dir.dot(&n);
        let hit = s + dir * t;
        let col = (hit - c).dot(&pose.u_dir()) / SPACING[1] + (SHAPE[1] as f64 - 1.0) / 2.0;
        let row = (hit - c).dot(&pose.v_dir()) / SPACING[0] + (SHAPE[0] as f64 - 1.0) / 2.0;
        (col, row)
    }

    fn tilted_pose(theta: f64) -> Pose {
        let base = Pose::circular(theta, 1200.0, 750.0).unwrap();
        let tilt = Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(base.u_dir()),
            10f64.to_radians(),
        );
        // rotate v about u, keep source/detector center on the circle
        Pose::new(
            base.source_position(),
            base.detector_center(),
            base.u_dir(),
            tilt * base.v_dir(),
        )
        .unwrap()
    }

    #[test]
    fn circular_angles() {
        let a = circular_trajectory_2d(4, 2.0 * PI).unwrap();
        for (got, want) in a.iter().zip([0.0, PI / 2.0, PI, 3.0 * PI / 2.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert_eq!(circular_trajectory_2d(1, 2.0 * PI).unwrap(), vec![0.0]);
        let a = circular_trajectory_2d(360, 2.0 * PI).unwrap();
        assert_eq!(a.len(), 360);
        for w in a.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], PI / 180.0, epsilon = 1e-12);
        }
        assert!(circular_trajectory_2d(0, 1.0).is_err());
        assert!(circular_trajectory_2d(3, 0.0).is_err());
    }

    #[test]
    fn source_maps_to_zero() {
        let pose = tilted_pose(0.3);
        let p = pose_to_projection_matrix(&pose, SHAPE, SPACING).unwrap();
        let h = p.apply(&pose.source_position());
        assert!(h.norm() < 1e-9, "{h}");
    }

    #[test]
    fn detector_points_match_intersection_oracle() {
        for theta in [0.0, 0.7, 2.0, 4.5] {
            let pose = tilted_pose(theta);
            let p = pose_to_projection_matrix(&pose, SHAPE, SPACING).unwrap();
            let c = pose.detector_center();
            for x in [
                c,
                c + pose.u_dir() * SPACING[1],
                c + pose.v_dir() * (3.0 * SPACING[0]),
                Vector3::new(10.0, -20.0, 5.0),
            ] {
                let (col, row) = p.pixel(&x).unwrap();
                let (ocol, orow) = pixel_by_intersection(&pose, &x);
                assert_abs_diff_eq!(col, ocol, epsilon = 1e-9);
                assert_abs_diff_eq!(row, orow, epsilon = 1e-9);
            }
            let (col, row) = p.pixel(&c).unwrap();
            assert_abs_diff_eq!(col, 29.5, epsilon = 1e-9);
            assert_abs_diff_eq!(row, 19.5, epsilon = 1e-9);
            let (col, row) = p.pixel(&(c + pose.u_dir() * SPACING[1])).unwrap();
            assert_abs_diff_eq!(col, 30.5, epsilon = 1e-9);
            assert_abs_diff_eq!(row, 19.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn matrices_are_normalized() {
        let p = pose_to_projection_matrix(&tilted_pose(1.0), SHAPE, SPACING).unwrap();
        assert_abs_diff_eq!(p.principal_axis().norm(), 1.0, epsilon = 1e-12);
        // isocenter depth is the source-isocenter distance for circular poses
        let p = pose_to_projection_matrix(&Pose::circular(1.0, 1200.0, 750.0).unwrap(), SHAPE, SPACING)
            .unwrap();
        assert_abs_diff_eq!(p.apply(&Vector3::zeros()).z, 750.0, epsilon = 1e-9);
    }

    #[test]
    fn parallel_ray_is_degenerate() {
        let pose = Pose {
            source_position: Vector3::new(0.0, 0.0, 0.0),
            detector_center: Vector3::new(0.0, 5.0, 0.0),
            u_dir: Vector3::new(0.0, 1.0, 0.0),
            v_dir: Vector3::new(0.0, 0.0, 1.0),
        };
        assert!(matches!(
            pose_to_projection_matrix(&pose, SHAPE, SPACING),
            Err(Error::DegeneratePose { .. })
        ));
        assert!(Pose::new(
            pose.source_position,
            pose.detector_center,
            pose.u_dir,
            pose.v_dir
        )
        .is_err());
    }

    #[test]
    fn pose_rejects_non_orthonormal_axes() {
        let z = Vector3::zeros();
        let x = Vector3::new(10.0, 0.0, 0.0);
        assert!(Pose::new(x, -x, Vector3::new(0.0, 1.1, 0.0), Vector3::z()).is_err());
        assert!(Pose::new(
            x,
            -x,
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.1, 1.0).normalize()
        )
        .is_err());
        assert!(Pose::new(z, -x, Vector3::y(), Vector3::z()).is_ok());
    }

    #[test]
    fn first_circular_pose() {
        let m = circular_trajectory_3d(1, 2.0 * PI, 1200.0, 750.0, SHAPE, SPACING).unwrap();
        let s = m[0].source_position().unwrap();
        assert_abs_diff_eq!((s - Vector3::new(750.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-9);
        let pose = Pose::circular(0.0, 1200.0, 750.0).unwrap();
        assert_eq!(pose.detector_center(), Vector3::new(-450.0, 0.0, 0.0));
        let from_pose = trajectory_from_poses(&[pose], SHAPE, SPACING).unwrap();
        assert_eq!(from_pose, m);
    }

    #[test]
    fn rotated_trajectory_matches_closed_form() {
        let n = 360;
        let mats = circular_trajectory_3d(n, 2.0 * PI, 1200.0, 750.0, SHAPE, SPACING).unwrap();
        let angles = circular_trajectory_2d(n, 2.0 * PI).unwrap();
        for (m, theta) in mats.iter().zip(&angles) {
            let closed = pose_to_projection_matrix(
                &Pose::circular(*theta, 1200.0, 750.0).unwrap(),
                SHAPE,
                SPACING,
            )
            .unwrap();
            for (a, b) in m.to_row_major().iter().zip(closed.to_row_major()) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
        // antipodal sources
        for i in 0..n / 2 {
            let a = mats[i].source_position().unwrap();
            let b = mats[i + n / 2].source_position().unwrap();
            assert!((a + b).norm() < 1e-7);
        }
    }

    #[test]
    fn pose_list_permutation_and_error_index() {
        let poses: Vec<Pose> = (0..4).map(|i| tilted_pose(i as f64)).collect();
        let mats = trajectory_from_poses(&poses, SHAPE, SPACING).unwrap();
        let rev: Vec<Pose> = poses.iter().rev().copied().collect();
        let rev_mats = trajectory_from_poses(&rev, SHAPE, SPACING).unwrap();
        let mut expect = mats.clone();
        expect.reverse();
        assert_eq!(rev_mats, expect);

        let mut bad = poses.clone();
        bad[2] = Pose {
            source_position: Vector3::zeros(),
            detector_center: Vector3::new(0.0, 1.0, 0.0),
            u_dir: Vector3::y(),
            v_dir: Vector3::z(),
        };
        match trajectory_from_poses(&bad, SHAPE, SPACING) {
            Err(Error::DegeneratePose { index: Some(2), .. }) => {}
            other => panic!("expected error at index 2, got {other:?}"),
        }
    }

    #[test]
    fn tilted_trajectory_point_checks() {
        let poses: Vec<Pose> = (0..8).map(|i| tilted_pose(i as f64 * PI / 4.0)).collect();
        let mats = trajectory_from_poses(&poses, SHAPE, SPACING).unwrap();
        for (pose, p) in poses.iter().zip(&mats) {
            assert!(p.apply(&pose.source_position()).norm() < 1e-9);
            let c = pose.detector_center();
            let (col, row) = p.pixel(&c).unwrap();
            assert_abs_diff_eq!(col, 29.5, epsilon = 1e-9);
            assert_abs_diff_eq!(row, 19.5, epsilon = 1e-9);
            let (col, row) = p.pixel(&(c + pose.u_dir() * SPACING[1])).unwrap();
            assert_abs_diff_eq!(col, 30.5, epsilon = 1e-9);
            assert_abs_diff_eq!(row, 19.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn matrix_file_loading() {
        let m = parse_projection_matrices(r#"{"matrices": [[1,0,0,0, 0,1,0,0, 0,0,1,0]]}"#).unwrap();
        assert_eq!(
            m[0].to_row_major(),
            [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );

        let p = pose_to_projection_matrix(&tilted_pose(0.4), SHAPE, SPACING).unwrap();
        let scaled: Vec<f64> = p.to_row_major().iter().map(|v| v * 7.0).collect();
        let json = format!(r#"{{"matrices": [{scaled:?}]}}"#);
        let loaded = parse_projection_matrices(&json).unwrap();
        for (a, b) in loaded[0].to_row_major().iter().zip(p.to_row_major()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9 * b.abs().max(1.0));
        }

        let eleven = r#"{"matrices": [[1,0,0,0, 0,1,0,0, 0,0,1]]}"#;
        assert!(matches!(parse_projection_matrices(eleven), Err(Error::Format(_))));
        assert!(parse_projection_matrices("{not json").is_err());
        let rank2 = r#"{"matrices": [[1,0,0,0, 2,0,0,0, 0,0,1,0]]}"#;
        assert!(parse_projection_matrices(rank2).is_err());
    }

    #[test]
    fn matrix_file_roundtrip() {
        let mats = circular_trajectory_3d(12, 2.0 * PI, 1200.0, 750.0, SHAPE, SPACING).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_projection_matrices(&path, &mats).unwrap();
        let back = load_projection_matrices(&path).unwrap();
        assert_eq!(back, mats);
    }

    #[test]
    fn cone_angles_recovered_from_matrices() {
        let vol = VolumeGeometry::new(vec![4, 4, 4], vec![1.0; 3]).unwrap();
        let g = GeometryCone3D::circular(vol, SHAPE, SPACING, 8, 2.0 * PI, 1200.0, 750.0).unwrap();
        for (got, want) in g.angles().iter().zip(circular_trajectory_2d(8, 2.0 * PI).unwrap()) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }
}
