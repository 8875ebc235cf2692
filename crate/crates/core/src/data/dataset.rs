//! Dataset items and their on-disk layout:
//!
//! ```text
//! <dir>/manifest.csv             id,shape,n_points,channels
//! <dir>/items/<id>/cloud.ply     normalized ground truth
//! <dir>/items/<id>/image.rast    conditioning image
//! <dir>/items/<id>/cameras.txt   prior viewpoints; the reference is the
//!                                conditioning camera
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Rotation3;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::{sample_shape, RunConfig, ShapeKind, ShapeSpec};
use crate::conditioning::{FeatureImage, PriorMode};
use crate::geometry::{io, normalize, orbit_viewpoints, Camera, PointCloud, ViewpointSet};
use crate::rasterizer::rast::Raster;
use crate::rasterizer::{hard_zbuffer, render_depth};
use crate::rng::{self, streams};
use crate::{Error, Result};

/// Azimuth of every conditioning camera; shapes vary in yaw instead.
pub const CONDITIONING_AZIMUTH: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub id: String,
    pub shape: ShapeKind,
    pub ground_truth: PointCloud,
    pub conditioning_image: FeatureImage,
    pub prior_views: ViewpointSet,
}

impl DatasetItem {
    pub fn conditioning_view(&self) -> &Camera {
        self.prior_views.reference()
    }
}

/// Shape for dataset index `index`: kinds cycle, parameters and yaw are
/// drawn from the item's own stream.
pub fn random_shape_spec(index: usize, seed: u64, n_points: usize) -> (ShapeSpec, f64) {
    let item_seed = seed.wrapping_mul(1_000_003).wrapping_add(index as u64);
    let mut r = rng::stream(item_seed, streams::DATA + 100);
    let kind = match index % 4 {
        0 => ShapeKind::Sphere { radius: 1.0 },
        1 => ShapeKind::Box {
            extents: [
                r.random_range(0.4..1.2),
                r.random_range(0.4..1.2),
                r.random_range(0.4..1.2),
            ],
        },
        2 => ShapeKind::Cylinder {
            radius: r.random_range(0.3..0.8),
            height: r.random_range(0.5..2.0),
        },
        _ => ShapeKind::Torus {
            major: 1.0,
            minor: r.random_range(0.15..0.45),
        },
    };
    let yaw = r.random_range(0.0..std::f64::consts::TAU);
    (
        ShapeSpec {
            kind,
            n_points,
            seed: item_seed,
        },
        yaw,
    )
}

fn to_f32_precision(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| f64::from(x as f32)).collect()
}

/// Samples, rotates by `yaw` about +z and normalizes the shape, then renders
/// the conditioning image from the reference camera and builds the orbit of
/// prior viewpoints around it.
pub fn build_item(id: &str, spec: &ShapeSpec, yaw: f64, run: &RunConfig) -> Result<DatasetItem> {
    let cfg = run.splat_config();
    let cond = run.condition_spec()?;
    let rot = Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), yaw);
    let raw = sample_shape(spec)?.map_positions(|p| rot * p);
    let (ground_truth, _) = normalize(&raw)?;

    let size = run.image_size;
    let half = size as f64 / 2.0;
    let reference = Camera::look_at_orbit(
        CONDITIONING_AZIMUTH,
        run.elevation(),
        run.camera_radius,
        run.focal_scale * size as f64,
        [half, half],
        size,
        size,
    )?;
    let prior_views = orbit_viewpoints(&reference, run.views, run.camera_radius, run.elevation())?;

    let depth = render_depth(&ground_truth, &reference, &cfg)?;
    let base = FeatureImage::single(size, size, to_f32_precision(depth.depth().to_vec()), "depth")?;
    let depth_prior = if cond.prior_mode == PriorMode::Depth {
        let z = hard_zbuffer(&ground_truth, &reference, &cfg)?
            .into_iter()
            .map(|z| if z.is_finite() { z } else { cfg.far })
            .collect();
        Some(FeatureImage::single(size, size, to_f32_precision(z), "depth-prior")?)
    } else {
        None
    };
    let image = cond.compose(&base, depth_prior.as_ref())?;
    let conditioning_image = FeatureImage::new(
        size,
        size,
        to_f32_precision(image.data().to_vec()),
        image.tags().to_vec(),
    )?;

    Ok(DatasetItem {
        id: id.to_string(),
        shape: spec.kind,
        ground_truth,
        conditioning_image,
        prior_views,
    })
}

/// All `n_items` items of a run, generated in parallel.
pub fn generate_dataset(run: &RunConfig) -> Result<Vec<DatasetItem>> {
    (0..run.n_items)
        .into_par_iter()
        .map(|i| {
            let (spec, yaw) = random_shape_spec(i, run.seed, run.n_points);
            build_item(&format!("{i:04}"), &spec, yaw, run)
        })
        .collect()
}

pub fn write_dataset(dir: &Path, items: &[DatasetItem]) -> Result<()> {
    let mut manifest = String::from("id,shape,n_points,channels\n");
    for item in items {
        let item_dir = dir.join("items").join(&item.id);
        fs::create_dir_all(&item_dir)?;
        io::write_ply(&item_dir.join("cloud.ply"), &item.ground_truth)?;
        item.conditioning_image.to_raster()?.write(&item_dir.join("image.rast"))?;
        io::write_cameras(&item_dir.join("cameras.txt"), &item.prior_views)?;
        let _ = writeln!(
            manifest,
            "{},{},{},{}",
            item.id,
            item.shape,
            item.ground_truth.len(),
            item.conditioning_image.tags().join("|")
        );
    }
    fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Vec<DatasetItem>> {
    let manifest_path = dir.join("manifest.csv");
    let text = fs::read_to_string(&manifest_path)?;
    let mut lines = text.lines();
    if lines.next() != Some("id,shape,n_points,channels") {
        return Err(Error::format(&manifest_path, "bad manifest header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::format(&manifest_path, format!("bad row '{line}'")));
            }
            let item_dir = dir.join("items").join(cols[0]);
            let ground_truth = io::read_ply(&item_dir.join("cloud.ply"))?;
            let expected: usize = cols[2]
                .parse()
                .map_err(|_| Error::format(&manifest_path, format!("bad n_points in '{line}'")))?;
            if ground_truth.len() != expected {
                return Err(Error::format(&manifest_path, format!("item {} point count mismatch", cols[0])));
            }
            let raster = Raster::read(&item_dir.join("image.rast"))?;
            let tags = cols[3].split('|').map(str::to_string).collect();
            Ok(DatasetItem {
                id: cols[0].to_string(),
                shape: cols[1].parse()?,
                ground_truth,
                conditioning_image: FeatureImage::from_raster(&raster, tags)?,
                prior_views: io::read_cameras(&item_dir.join("cameras.txt"))?,
            })
        })
        .collect()
}

/// Deterministic shuffled split; the train part gets `round(fraction · n)`
/// items.
pub fn split<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train fraction must lie in (0, 1)"));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut rng::stream(seed, streams::SPLIT));
    let n_train = (train_fraction * items.len() as f64).round() as usize;
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}
