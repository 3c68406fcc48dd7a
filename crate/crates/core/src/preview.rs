//! Grayscale PNG previews of volumes and sinograms.

use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::grids::{Sinogram, Volume};

/// A single-channel image with its own intensity window.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub width: usize,
    pub height: usize,
    /// row-major, top row first
    pub pixels: Vec<f32>,
}

impl Panel {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != width * height || width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "panel {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// 2D volume, or the central z-slice of a 3D volume, with +y pointing up.
    pub fn from_volume(vol: &Volume) -> Self {
        let shape = vol.shape();
        let (ny, nx) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let offset = if shape.len() == 3 { shape[0] / 2 * ny * nx } else { 0 };
        let slice = &vol.data()[offset..offset + ny * nx];
        let pixels = slice.chunks(nx).rev().flatten().copied().collect();
        Self {
            width: nx,
            height: ny,
            pixels,
        }
    }

    /// Sinogram with one row per projection; cone-beam data contributes its
    /// central detector row.
    pub fn from_sinogram(sino: &Sinogram) -> Self {
        let det = sino.detector_shape();
        let cols = *det.last().expect("detector has an axis");
        let row = if det.len() == 2 { det[0] / 2 } else { 0 };
        let pixels = (0..sino.n_projections())
            .flat_map(|p| sino.projection(p)[row * cols..(row + 1) * cols].iter().copied())
            .collect();
        Self {
            width: cols,
            height: sino.n_projections(),
            pixels,
        }
    }

    /// Single cone-beam projection image.
    pub fn from_projection(sino: &Sinogram, index: usize) -> Self {
        let det = sino.detector_shape();
        let cols = *det.last().expect("detector has an axis");
        let rows = if det.len() == 2 { det[0] } else { 1 };
        Self {
            width: cols,
            height: rows,
            pixels: sino.projection(index).to_vec(),
        }
    }

    /// Intensity range used for display: (min, max) of finite pixels.
    pub fn range(&self) -> (f32, f32) {
        self.pixels
            .iter()
            .filter(|v| v.is_finite())
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    fn to_gray(&self, window: Option<(f32, f32)>) -> GrayImage {
        let (lo, hi) = window.unwrap_or_else(|| self.range());
        let span = if hi > lo { hi - lo } else { 1.0 };
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.pixels[y as usize * self.width + x as usize];
            let t = ((v - lo) / span).clamp(0.0, 1.0);
            Luma([(t * 255.0).round() as u8])
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>, window: Option<(f32, f32)>) -> Result<()> {
        let path = path.as_ref();
        self.to_gray(window)
            .save(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Tiles panels left to right in rows of `columns`, each scaled to its own
/// range, separated by `gap` black pixels.
pub fn save_montage(
    path: impl AsRef<Path>,
    panels: &[Panel],
    columns: usize,
    gap: usize,
) -> Result<()> {
    if panels.is_empty() || columns == 0 {
        return Err(Error::invalid("montage needs at least one panel and column"));
    }
    let cell_w = panels.iter().map(|p| p.width).max().unwrap_or(1);
    let cell_h = panels.iter().map(|p| p.height).max().unwrap_or(1);
    let cols = columns.min(panels.len());
    let rows = panels.len().div_ceil(cols);
    let width = cols * cell_w + (cols - 1) * gap;
    let height = rows * cell_h + (rows - 1) * gap;
    let mut img = GrayImage::new(width as u32, height as u32);
    for (i, p) in panels.iter().enumerate() {
        let tile = p.to_gray(None);
        let x0 = (i % cols) * (cell_w + gap);
        let y0 = (i / cols) * (cell_h + gap);
        for (x, y, px) in tile.enumerate_pixels() {
            img.put_pixel(x0 as u32 + x, y0 as u32 + y, *px);
        }
    }
    let path = path.as_ref();
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::VolumeGeometry;

    #[test]
    fn volume_panel_flips_y() {
        let vg = VolumeGeometry::new(vec![2, 3], vec![1.0, 1.0]).unwrap();
        let v = Volume::from_data(vg, vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let p = Panel::from_volume(&v);
        assert_eq!(p.pixels, vec![3., 4., 5., 0., 1., 2.]);
    }

    #[test]
    fn montage_writes_png() {
        let dir = tempfile::tempdir().unwrap();
        let a = Panel::new(4, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        let b = Panel::new(2, 2, vec![1.0; 4]).unwrap();
        let path = dir.path().join("m.png");
        save_montage(&path, &[a, b.clone(), b], 2, 1).unwrap();
        let img = image::open(&path).unwrap().to_luma8();
        assert_eq!((img.width(), img.height()), (9, 7));
    }
}
