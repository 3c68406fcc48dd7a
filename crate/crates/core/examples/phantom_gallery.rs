//! Renders the 2D and 3D Shepp-Logan phantoms and a partial-volume disk.
//!
//! cargo run --release --example phantom_gallery -- [out_dir]

use std::path::PathBuf;

use ctgrad::grids::write_volume;
use ctgrad::phantoms::{partial_volume_solid, shepp_logan_2d, shepp_logan_3d};
use ctgrad::preview::{save_montage, Panel};
use ctgrad::VolumeGeometry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&out)?;

    let slice = VolumeGeometry::new(vec![256, 256], vec![1.0, 1.0])?;
    let sl2 = shepp_logan_2d(&slice)?;
    let sl3 = shepp_logan_3d(&VolumeGeometry::new(vec![128; 3], vec![2.0; 3])?)?;
    let disk = partial_volume_solid(&slice, 80.0, 1.0, 4)?;

    write_volume(&sl2, out.join("shepp_logan_2d"))?;
    write_volume(&sl3, out.join("shepp_logan_3d"))?;
    // narrow window to bring out the low-contrast ellipses
    Panel::from_volume(&sl2).save_png(out.join("shepp_logan_2d.png"), Some((0.0, 0.4)))?;

    let panels = [&sl2, &sl3, &disk].map(Panel::from_volume);
    save_montage(out.join("phantoms.png"), &panels, 3, 4)?;
    println!("wrote phantoms to {}", out.display());
    Ok(())
}
