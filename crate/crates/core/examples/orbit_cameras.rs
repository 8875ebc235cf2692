//! Normalizes a sampled shape and places `H` orbit cameras around it.
//!
//! `cargo run --example orbit_cameras -- [H]`

use cdm::data::{sample_shape, ShapeKind, ShapeSpec};
use cdm::geometry::{io, normalize, orbit_viewpoints, transform, Camera};

fn main() -> cdm::Result<()> {
    let views: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    let spec = ShapeSpec {
        kind: ShapeKind::Box { extents: [1.0, 0.6, 0.3] },
        n_points: 1024,
        seed: 7,
    };
    let (cloud, norm) = normalize(&sample_shape(&spec)?)?;
    println!(
        "normalized {} points: scale {:.4}, offset {:?}, max radius {:.6}",
        cloud.len(),
        norm.scale,
        norm.offset.as_slice(),
        cloud.max_radius()
    );

    let reference = Camera::look_at_orbit(0.0, 20f64.to_radians(), 3.0, 64.0, [32.0, 32.0], 64, 64)?;
    let set = orbit_viewpoints(&reference, views, 3.0, 20f64.to_radians())?;
    for (k, cam) in set.cameras().iter().enumerate() {
        let in_cam = transform(&cloud, cam);
        let nearest = in_cam.positions().iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        println!(
            "view {k}: azimuth {:6.1} deg, center {:?}, nearest depth {nearest:.4}",
            cam.azimuth().to_degrees(),
            cam.center().map(|v| (v * 1e4).round() / 1e4).as_slice()
        );
    }
    print!("{}", io::cameras_to_string(&set));
    Ok(())
}
