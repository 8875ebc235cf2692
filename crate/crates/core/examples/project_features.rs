//! Projects image features onto a cloud through the conditioning camera and
//! reports how many points are visible, with and without a contour prior.

use cdm::conditioning::{project_features, sobel_contour, stack_priors, FeatureImage};
use cdm::data::{sample_shape, ShapeKind, ShapeSpec};
use cdm::geometry::Camera;
use cdm::rasterizer::{render_depth, SplatConfig};

fn main() -> cdm::Result<()> {
    let size = 64;
    let sphere = sample_shape(&ShapeSpec {
        kind: ShapeKind::Sphere { radius: 1.0 },
        n_points: 4096,
        seed: 3,
    })?;
    let cam = Camera::look_at_orbit(0.5, 0.35, 3.0, size as f64, [32.0, 32.0], size, size)?;
    let cfg = SplatConfig::for_orbit(size, 3.0);

    let depth = render_depth(&sphere, &cam, &cfg)?;
    let base = FeatureImage::single(size, size, depth.depth().to_vec(), "depth")?;
    let image = stack_priors(&base, &sobel_contour(&base))?;
    println!("condition channels: {:?}", image.tags());

    for eps in [0.0, cfg.softness, 0.2] {
        let proj = project_features(&sphere, &cam, &image, &cfg, eps)?;
        println!("visibility eps {eps:.3}: visible fraction {:.4}", proj.visible_fraction);
    }

    let proj = project_features(&sphere, &cam, &image, &cfg, cfg.softness)?;
    let feats = proj.cloud.features().expect("features attached");
    let (i, _) = proj.visible.iter().enumerate().find(|(_, v)| **v).expect("some point is visible");
    println!("point {i} at {:?} carries {:?}", sphere.positions()[i].as_slice(), feats.row(i));
    Ok(())
}
