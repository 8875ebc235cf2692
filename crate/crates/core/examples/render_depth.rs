//! Soft depth render of a unit sphere, printed as ASCII shading and written
//! as a RAST1 file.
//!
//! `cargo run --example render_depth -- [out.rast]`

use cdm::data::{sample_shape, ShapeKind, ShapeSpec};
use cdm::geometry::Camera;
use cdm::rasterizer::rast::Raster;
use cdm::rasterizer::{render_depth, SplatConfig};

fn main() -> cdm::Result<()> {
    let size = 32;
    let sphere = sample_shape(&ShapeSpec {
        kind: ShapeKind::Sphere { radius: 1.0 },
        n_points: 4096,
        seed: 1,
    })?;
    let cam = Camera::look_at_orbit(0.0, 0.3, 3.0, size as f64, [16.0, 16.0], size, size)?;
    let cfg = SplatConfig::for_orbit(size, 3.0);
    let depth = render_depth(&sphere, &cam, &cfg)?;

    let shades = b" .:-=+*#%@";
    for row in 0..size {
        let line: String = (0..size)
            .map(|col| {
                if !depth.covered(row, col) {
                    return ' ';
                }
                // Nearer is brighter over the sphere's depth range [2, 3].
                let s = ((3.0 - depth.at(row, col)).clamp(0.0, 1.0) * 9.0).round() as usize;
                shades[s.max(1)] as char
            })
            .collect();
        println!("{line}");
    }
    let covered = depth.mask().iter().filter(|&&m| m).count();
    println!("covered pixels {covered}, center depth {:.4}", depth.at(16, 16));

    if let Some(path) = std::env::args().nth(1) {
        Raster::from_f64(size, size, 1, depth.depth())?.write(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
