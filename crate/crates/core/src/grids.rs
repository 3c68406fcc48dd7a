//! Volume and sinogram containers plus their on-disk exchange format.
//!
//! A grid is stored as a pair of files: `<path>.json` holds the header and
//! `<path>.raw` holds the samples as little-endian `f32`, C order.

use std::ffi::OsString;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and spacing of a volume, without samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeGeometry {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
}

impl VolumeGeometry {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() != spacing.len() {
            return Err(Error::invalid(format!(
                "volume shape {shape:?} and spacing {spacing:?} must be non-empty and of equal length"
            )));
        }
        if shape.contains(&0) {
            return Err(Error::invalid(format!("volume shape {shape:?} has a zero axis")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid(format!(
                "volume spacing {spacing:?} must be finite and strictly positive"
            )));
        }
        Ok(Self { shape, spacing })
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// World coordinate (mm) of voxel index `i` along `axis`.
    pub fn world_coord(&self, axis: usize, i: usize) -> f64 {
        centered_coord(i, self.shape[axis], self.spacing[axis])
    }

    /// Product of the spacings: the voxel area (2D) or volume (3D).
    pub fn voxel_measure(&self) -> f64 {
        self.spacing.iter().product()
    }
}

/// `(i - (n-1)/2) * spacing`.
#[inline]
pub fn centered_coord(i: usize, n: usize, spacing: f64) -> f64 {
    (i as f64 - (n as f64 - 1.0) * 0.5) * spacing
}

/// C-order flat index of `index` within `shape`.
pub fn flat_index(shape: &[usize], index: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), index.len());
    index
        .iter()
        .zip(shape)
        .fold(0usize, |acc, (&i, &n)| acc * n + i)
}

/// 2D or 3D attenuation grid (1/mm).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geometry: VolumeGeometry,
    data: Vec<f32>,
}

impl Volume {
    pub fn zeros(geometry: VolumeGeometry) -> Self {
        let data = vec![0.0; geometry.len()];
        Self { geometry, data }
    }

    pub fn from_data(geometry: VolumeGeometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::invalid(format!(
                "volume data has {} samples but shape {:?} needs {}",
                data.len(),
                geometry.shape,
                geometry.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("volume data contains non-finite values"));
        }
        Ok(Self { geometry, data })
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn shape(&self) -> &[usize] {
        &self.geometry.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.geometry.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> f32 {
        self.data[flat_index(&self.geometry.shape, index)]
    }

    /// Multiplies every sample by `factor`.
    pub fn scale(&mut self, factor: f32) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Stack of detector measurements, one row (2D geometries) or image
/// (cone-beam) per projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    n_projections: usize,
    detector_shape: Vec<usize>,
    detector_spacing: Vec<f64>,
    data: Vec<f32>,
}

impl Sinogram {
    pub fn zeros(
        n_projections: usize,
        detector_shape: Vec<usize>,
        detector_spacing: Vec<f64>,
    ) -> Result<Self> {
        validate_detector(n_projections, &detector_shape, &detector_spacing)?;
        let len = n_projections * detector_shape.iter().product::<usize>();
        Ok(Self {
            n_projections,
            detector_shape,
            detector_spacing,
            data: vec![0.0; len],
        })
    }

    pub fn from_data(
        n_projections: usize,
        detector_shape: Vec<usize>,
        detector_spacing: Vec<f64>,
        data: Vec<f32>,
    ) -> Result<Self> {
        validate_detector(n_projections, &detector_shape, &detector_spacing)?;
        let len = n_projections * detector_shape.iter().product::<usize>();
        if data.len() != len {
            return Err(Error::invalid(format!(
                "sinogram data has {} samples but {} projections of {:?} need {}",
                data.len(),
                n_projections,
                detector_shape,
                len
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sinogram data contains non-finite values"));
        }
        Ok(Self {
            n_projections,
            detector_shape,
            detector_spacing,
            data,
        })
    }

    /// Zero sinogram with the same metadata as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            n_projections: self.n_projections,
            detector_shape: self.detector_shape.clone(),
            detector_spacing: self.detector_spacing.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn n_projections(&self) -> usize {
        self.n_projections
    }

    pub fn detector_shape(&self) -> &[usize] {
        &self.detector_shape
    }

    pub fn detector_spacing(&self) -> &[f64] {
        &self.detector_spacing
    }

    /// Samples per projection.
    pub fn projection_len(&self) -> usize {
        self.detector_shape.iter().product()
    }

    /// Full array shape: `[n_projections, detector_shape...]`.
    pub fn shape(&self) -> Vec<usize> {
        std::iter::once(self.n_projections)
            .chain(self.detector_shape.iter().copied())
            .collect()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn projection(&self, i: usize) -> &[f32] {
        let n = self.projection_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn projection_mut(&mut self, i: usize) -> &mut [f32] {
        let n = self.projection_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn scale(&mut self, factor: f32) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// True when both sinograms share projection count, detector shape and spacing.
    pub fn same_layout(&self, other: &Sinogram) -> bool {
        self.n_projections == other.n_projections
            && self.detector_shape == other.detector_shape
            && self.detector_spacing == other.detector_spacing
    }
}

fn validate_detector(n_projections: usize, shape: &[usize], spacing: &[f64]) -> Result<()> {
    if n_projections == 0 {
        return Err(Error::invalid("a sinogram needs at least one projection"));
    }
    if shape.is_empty() || shape.len() > 2 || shape.len() != spacing.len() {
        return Err(Error::invalid(format!(
            "detector shape {shape:?} / spacing {spacing:?} must both have 1 or 2 entries"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::invalid(format!("detector shape {shape:?} has a zero axis")));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::invalid(format!(
            "detector spacing {spacing:?} must be finite and strictly positive"
        )));
    }
    Ok(())
}

/// Either kind of grid, as returned by [`read_grid`].
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Volume(Volume),
    Sinogram(Sinogram),
}

impl Grid {
    pub fn into_volume(self) -> Result<Volume> {
        match self {
            Grid::Volume(v) => Ok(v),
            Grid::Sinogram(_) => Err(Error::Format("expected a volume, found a sinogram".into())),
        }
    }

    pub fn into_sinogram(self) -> Result<Sinogram> {
        match self {
            Grid::Sinogram(s) => Ok(s),
            Grid::Volume(_) => Err(Error::Format("expected a sinogram, found a volume".into())),
        }
    }

    fn data(&self) -> &[f32] {
        match self {
            Grid::Volume(v) => v.data(),
            Grid::Sinogram(s) => s.data(),
        }
    }
}

impl From<Volume> for Grid {
    fn from(v: Volume) -> Self {
        Grid::Volume(v)
    }
}

impl From<Sinogram> for Grid {
    fn from(s: Sinogram) -> Self {
        Grid::Sinogram(s)
    }
}

pub const DTYPE: &str = "f32le";
pub const ORDER: &str = "C";

/// Header stored in `<path>.json`.
///
/// For sinograms `shape` is `[n_projections, detector_shape...]` and
/// `spacing` repeats `detector_spacing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub kind: String,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub dtype: String,
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_projections: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_spacing: Option<Vec<f64>>,
}

impl GridHeader {
    fn for_grid(grid: &Grid) -> Self {
        match grid {
            Grid::Volume(v) => Self {
                kind: "volume".into(),
                shape: v.shape().to_vec(),
                spacing: v.spacing().to_vec(),
                dtype: DTYPE.into(),
                order: ORDER.into(),
                n_projections: None,
                detector_shape: None,
                detector_spacing: None,
            },
            Grid::Sinogram(s) => Self {
                kind: "sinogram".into(),
                shape: s.shape(),
                spacing: s.detector_spacing().to_vec(),
                dtype: DTYPE.into(),
                order: ORDER.into(),
                n_projections: Some(s.n_projections()),
                detector_shape: Some(s.detector_shape().to_vec()),
                detector_spacing: Some(s.detector_spacing().to_vec()),
            },
        }
    }

    fn sample_count(&self) -> usize {
        self.shape.iter().product()
    }
}

/// `<path>.json`
pub fn header_path(path: &Path) -> PathBuf {
    with_suffix(path, ".json")
}

/// `<path>.raw`
pub fn raw_path(path: &Path) -> PathBuf {
    with_suffix(path, ".raw")
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<path>.json` and `<path>.raw`.
pub fn write_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = GridHeader::for_grid(grid);
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| Error::Format(format!("cannot serialize header: {e}")))?;
    let hp = header_path(path);
    fs::write(&hp, json).map_err(|e| Error::io(&hp, e))?;

    let bytes: Vec<u8> = grid.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    let rp = raw_path(path);
    fs::write(&rp, bytes).map_err(|e| Error::io(&rp, e))?;
    Ok(())
}

pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    write_grid(&Grid::Volume(volume.clone()), path)
}

pub fn write_sinogram(sino: &Sinogram, path: impl AsRef<Path>) -> Result<()> {
    write_grid(&Grid::Sinogram(sino.clone()), path)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

/// Reads a grid previously written by [`write_grid`] (or by any tool that
/// follows the same header + raw contract).
pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let hp = header_path(path);
    let header_bytes = read_file(&hp)?;
    let header: GridHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", hp.display())))?;

    if header.dtype != DTYPE {
        return Err(Error::UnsupportedDtype(header.dtype));
    }
    if header.order != ORDER {
        return Err(Error::Format(format!(
            "unsupported order {:?} (only \"C\" is defined)",
            header.order
        )));
    }

    let rp = raw_path(path);
    let raw = read_file(&rp)?;
    let expected = 4 * header.sample_count() as u64;
    if raw.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: rp,
            expected,
            actual: raw.len() as u64,
        });
    }
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    match header.kind.as_str() {
        "volume" => {
            let geometry = VolumeGeometry::new(header.shape, header.spacing)
                .map_err(|e| Error::Format(e.to_string()))?;
            Ok(Grid::Volume(
                Volume::from_data(geometry, data).map_err(|e| Error::Format(e.to_string()))?,
            ))
        }
        "sinogram" => {
            let n = header
                .n_projections
                .ok_or_else(|| Error::Format("sinogram header lacks n_projections".into()))?;
            let det_shape = header
                .detector_shape
                .ok_or_else(|| Error::Format("sinogram header lacks detector_shape".into()))?;
            let det_spacing = header
                .detector_spacing
                .ok_or_else(|| Error::Format("sinogram header lacks detector_spacing".into()))?;
            let full: Vec<usize> = std::iter::once(n).chain(det_shape.iter().copied()).collect();
            if full != header.shape {
                return Err(Error::Format(format!(
                    "sinogram shape {:?} disagrees with n_projections/detector_shape {:?}",
                    header.shape, full
                )));
            }
            Ok(Grid::Sinogram(
                Sinogram::from_data(n, det_shape, det_spacing, data)
                    .map_err(|e| Error::Format(e.to_string()))?,
            ))
        }
        other => Err(Error::Format(format!("unknown grid kind {other:?}"))),
    }
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    read_grid(path)?.into_volume()
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    read_grid(path)?.into_sinogram()
}
