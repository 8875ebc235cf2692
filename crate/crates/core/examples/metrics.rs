//! Chamfer distance and F-score on hand cases and on two sampled shapes.

use cdm::data::{sample_shape, ShapeKind, ShapeSpec};
use cdm::metrics::{chamfer, fscore, DEFAULT_TAU};
use cdm::PointCloud;

fn main() -> cdm::Result<()> {
    let origin = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]])?;
    let unit_x = PointCloud::from_xyz(&[[1.0, 0.0, 0.0]])?;
    println!("CD(origin, unit x) = {}", chamfer(&origin, &unit_x)?);
    println!("CD(origin, origin) = {}", chamfer(&origin, &origin)?);

    let shape = |kind, seed| {
        sample_shape(&ShapeSpec {
            kind,
            n_points: 2048,
            seed,
        })
    };
    let a = shape(ShapeKind::Sphere { radius: 1.0 }, 1)?;
    let b = shape(ShapeKind::Sphere { radius: 1.0 }, 2)?;
    let c = shape(ShapeKind::Sphere { radius: 1.05 }, 2)?;
    for (name, other) in [("resampled sphere", &b), ("5% larger sphere", &c)] {
        let r = fscore(&a, other, DEFAULT_TAU)?;
        println!(
            "{name}: CD {:.4}, F1 {:.4} (precision {:.4}, recall {:.4}) at tau {}",
            r.cd, r.f1, r.precision, r.recall, r.threshold
        );
    }
    Ok(())
}
