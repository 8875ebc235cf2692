//! Per-point condition features.
//!
//! The conditioning image (plus any stacked 2D prior channels) is sampled at
//! the projection of each point of the noisy cloud. Only points that pass a
//! z-buffer visibility test receive a sample; all others get zero rows.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::geometry::{Camera, Features, PointCloud};
use crate::rasterizer::rast::Raster;
use crate::rasterizer::{self, SplatConfig};
use crate::{Error, Result};

/// `H × W × C` raster, channels interleaved per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    tags: Vec<String>,
}

impl FeatureImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>, tags: Vec<String>) -> Result<Self> {
        let channels = tags.len();
        if channels == 0 {
            return Err(Error::invalid("feature image needs at least one channel"));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("feature image size must be positive"));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature image value"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            tags,
        })
    }

    /// Single-channel image from a row-major raster.
    pub fn single(width: usize, height: usize, data: Vec<f64>, tag: &str) -> Result<Self> {
        Self::new(width, height, data, vec![tag.to_string()])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// The first `count` channels.
    pub fn slice_channels(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.channels {
            return Err(Error::invalid(format!(
                "cannot take {count} of {} channels",
                self.channels
            )));
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .flat_map(|px| px[..count].iter().copied())
            .collect();
        Self::new(self.width, self.height, data, self.tags[..count].to_vec())
    }

    /// Bilinear sample at image coordinates `(u, v)` (pixel centers at
    /// `+0.5`), clamped at the border.
    pub fn sample_bilinear(&self, u: f64, v: f64, out: &mut [f64]) {
        let x = (u - 0.5).clamp(0.0, (self.width - 1) as f64);
        let y = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let (p00, p01) = (self.pixel(y0, x0), self.pixel(y0, x1));
        let (p10, p11) = (self.pixel(y1, x0), self.pixel(y1, x1));
        for c in 0..self.channels {
            let top = p00[c] * (1.0 - fx) + p01[c] * fx;
            let bottom = p10[c] * (1.0 - fx) + p11[c] * fx;
            out[c] = top * (1.0 - fy) + bottom * fy;
        }
    }

    pub fn to_raster(&self) -> Result<Raster> {
        Raster::from_f64(self.width, self.height, self.channels, &self.data)
    }

    pub fn from_raster(raster: &Raster, tags: Vec<String>) -> Result<Self> {
        if tags.len() != raster.channels {
            return Err(Error::shape(format!(
                "{} tags for a {}-channel raster",
                tags.len(),
                raster.channels
            )));
        }
        Self::new(raster.width, raster.height, raster.to_f64(), tags)
    }
}

/// Which extra 2D prior is stacked onto the conditioning image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMode {
    #[default]
    None,
    Contour,
    Depth,
    External,
}

impl FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "contour" => Ok(Self::Contour),
            "depth" => Ok(Self::Depth),
            "external" => Ok(Self::External),
            other => Err(Error::Config(format!("unknown prior_mode '{other}'"))),
        }
    }
}

impl fmt::Display for PriorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Contour => "contour",
            Self::Depth => "depth",
            Self::External => "external",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSpec {
    pub prior_mode: PriorMode,
    pub external_path: Option<PathBuf>,
    pub visibility_epsilon: f64,
}

impl ConditionSpec {
    pub fn new(prior_mode: PriorMode, external_path: Option<PathBuf>, visibility_epsilon: f64) -> Result<Self> {
        if prior_mode == PriorMode::External && external_path.is_none() {
            return Err(Error::Config("prior_mode = external requires prior_path".into()));
        }
        if !(visibility_epsilon >= 0.0) {
            return Err(Error::Config("visibility_eps must be non-negative".into()));
        }
        Ok(Self {
            prior_mode,
            external_path,
            visibility_epsilon,
        })
    }

    /// Builds the conditioning image: `base` plus the prior channel selected
    /// by the mode. `depth_prior` supplies the depth map for
    /// [`PriorMode::Depth`].
    pub fn compose(&self, base: &FeatureImage, depth_prior: Option<&FeatureImage>) -> Result<FeatureImage> {
        match self.prior_mode {
            PriorMode::None => Ok(base.clone()),
            PriorMode::Contour => stack_priors(base, &sobel_contour(base)),
            PriorMode::Depth => {
                let prior = depth_prior
                    .ok_or_else(|| Error::invalid("depth prior mode needs a depth map"))?;
                stack_priors(base, prior)
            }
            PriorMode::External => {
                let path = self.external_path.as_deref().expect("validated at construction");
                stack_priors(base, &load_external_prior(path)?)
            }
        }
    }
}

/// Reads an external prior raster; channels are tagged `external{k}`.
pub fn load_external_prior(path: &Path) -> Result<FeatureImage> {
    let raster = Raster::read(path)?;
    let tags = (0..raster.channels).map(|k| format!("external{k}")).collect();
    FeatureImage::from_raster(&raster, tags)
}

/// Sobel gradient magnitude of the channel mean, scaled to `[0, 1]`.
pub fn sobel_contour(image: &FeatureImage) -> FeatureImage {
    let (w, h) = (image.width, image.height);
    let mean: Vec<f64> = image
        .data
        .chunks_exact(image.channels)
        .map(|px| px.iter().sum::<f64>() / image.channels as f64)
        .collect();
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        mean[r * w + c]
    };
    let mut mag = vec![0.0; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            mag[r as usize * w + c as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        mag.iter_mut().for_each(|m| *m /= max);
    }
    FeatureImage::single(w, h, mag, "contour").expect("contour raster is well formed")
}

/// Channel-wise concatenation `base ⊕ prior`.
pub fn stack_priors(base: &FeatureImage, prior: &FeatureImage) -> Result<FeatureImage> {
    if base.width != prior.width || base.height != prior.height {
        return Err(Error::shape(format!(
            "cannot stack {}x{} prior onto {}x{} image",
            prior.width, prior.height, base.width, base.height
        )));
    }
    let mut data = Vec::with_capacity(base.data.len() + prior.data.len());
    for (a, b) in base
        .data
        .chunks_exact(base.channels)
        .zip(prior.data.chunks_exact(prior.channels))
    {
        data.extend_from_slice(a);
        data.extend_from_slice(b);
    }
    let tags = base.tags.iter().chain(&prior.tags).cloned().collect();
    FeatureImage::new(base.width, base.height, data, tags)
}

/// Result of projecting an image onto a cloud.
#[derive(Debug, Clone)]
pub struct Projection {
    pub cloud: PointCloud,
    /// Per point: did it receive an image sample.
    pub visible: Vec<bool>,
    pub visible_fraction: f64,
}

/// Samples `feat` at the projection of every visible point. A point is
/// visible when it lies in the frustum and its camera depth is within `eps`
/// of the hard z-buffer at its pixel.
pub fn project_features(
    cloud: &PointCloud,
    cam: &Camera,
    feat: &FeatureImage,
    cfg: &SplatConfig,
    eps: f64,
) -> Result<Projection> {
    if !(eps >= 0.0) {
        return Err(Error::invalid("visibility epsilon must be non-negative"));
    }
    if feat.width != cfg.width || feat.height != cfg.height {
        return Err(Error::shape(format!(
            "feature image is {}x{} but raster is {}x{}",
            feat.width, feat.height, cfg.width, cfg.height
        )));
    }
    let zbuf = rasterizer::hard_zbuffer(cloud, cam, cfg)?;
    let mut features = Features::zeros(cloud.len(), feat.channels);
    let mut visible = vec![false; cloud.len()];
    for (i, p) in cloud.positions().iter().enumerate() {
        let Some((pc, [u, v])) = rasterizer::frustum_projection(cam, cfg, p) else {
            continue;
        };
        if pc.z <= zbuf[rasterizer::pixel_of(cfg, u, v)] + eps {
            feat.sample_bilinear(u, v, features.row_mut(i));
            visible[i] = true;
        }
    }
    let count = visible.iter().filter(|&&v| v).count();
    Ok(Projection {
        cloud: cloud.clone().with_features(features)?,
        visible_fraction: count as f64 / cloud.len() as f64,
        visible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    fn cam(size: usize) -> Camera {
        let c = size as f64 / 2.0;
        Camera::from_extrinsics(Matrix3::identity(), Vector3::zeros(), size as f64, [c, c], size, size)
            .unwrap()
    }

    fn cfg(size: usize) -> SplatConfig {
        SplatConfig::new(0.04, size, size, 0.05, 0.1, 10.0).unwrap()
    }

    #[test]
    fn contour_of_constant_is_zero() {
        let img = FeatureImage::single(5, 4, vec![3.0; 20], "rgb").unwrap();
        let c = sobel_contour(&img);
        assert!(c.data().iter().all(|&v| v == 0.0));
        assert!(sobel_contour(&c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn contour_of_step_edge() {
        // Columns 0..3 are 0, columns 3..6 are 1.
        let (w, h) = (6, 5);
        let data = (0..w * h).map(|i| if i % w >= 3 { 1.0 } else { 0.0 }).collect();
        let c = sobel_contour(&FeatureImage::single(w, h, data, "g").unwrap());
        for r in 0..h {
            for col in 0..w {
                let want = if col == 2 || col == 3 { 1.0 } else { 0.0 };
                assert_eq!(c.pixel(r, col)[0], want, "({r},{col})");
            }
        }
    }

    #[test]
    fn stacking() {
        let base = FeatureImage::new(2, 2, (0..12).map(f64::from).collect(), vec!["r".into(), "g".into(), "b".into()])
            .unwrap();
        let contour = sobel_contour(&base);
        let s = stack_priors(&base, &contour).unwrap();
        assert_eq!(s.channels(), 4);
        assert_eq!(s.tags(), &["r", "g", "b", "contour"]);
        assert_eq!(s.slice_channels(3).unwrap(), base);

        assert!(FeatureImage::new(2, 2, vec![], vec![]).is_err());
        let other = FeatureImage::single(3, 2, vec![0.0; 6], "x").unwrap();
        assert!(stack_priors(&base, &other).is_err());
    }

    #[test]
    fn single_visible_point_gets_constant() {
        let img = FeatureImage::single(16, 16, vec![0.7; 256], "c").unwrap();
        let cloud = PointCloud::from_xyz(&[[0.01, 0.02, 2.0]]).unwrap();
        let p = project_features(&cloud, &cam(16), &img, &cfg(16), 0.05).unwrap();
        assert_eq!(p.visible_fraction, 1.0);
        assert!((p.cloud.features().unwrap().row(0)[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn out_of_frustum_point_gets_zero() {
        let img = FeatureImage::single(16, 16, vec![0.7; 256], "c").unwrap();
        let cloud = PointCloud::from_xyz(&[[5.0, 0.0, 2.0]]).unwrap();
        let p = project_features(&cloud, &cam(16), &img, &cfg(16), 0.05).unwrap();
        assert_eq!(p.visible_fraction, 0.0);
        assert_eq!(p.cloud.features().unwrap().row(0), &[0.0]);
    }

    #[test]
    fn occluded_point_gets_zero() {
        let img = FeatureImage::single(16, 16, vec![1.0; 256], "c").unwrap();
        let cloud = PointCloud::from_xyz(&[[0.0, 0.0, 2.0], [0.0, 0.0, 3.0]]).unwrap();
        let p = project_features(&cloud, &cam(16), &img, &cfg(16), 0.05).unwrap();
        assert_eq!(p.visible, vec![true, false]);
        assert_eq!(p.cloud.features().unwrap().row(1), &[0.0]);
        // A large tolerance admits it.
        let p = project_features(&cloud, &cam(16), &img, &cfg(16), 2.0).unwrap();
        assert_eq!(p.visible, vec![true, true]);
    }

    #[test]
    fn bilinear_interpolates_between_centers() {
        let img = FeatureImage::single(2, 1, vec![0.0, 1.0], "x").unwrap();
        let mut out = [0.0];
        img.sample_bilinear(1.0, 0.5, &mut out);
        assert!((out[0] - 0.5).abs() < 1e-15);
        img.sample_bilinear(-3.0, 0.5, &mut out);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn external_mode_requires_path() {
        assert!(ConditionSpec::new(PriorMode::External, None, 0.05).is_err());
        assert!("bogus".parse::<PriorMode>().is_err());
        assert_eq!("contour".parse::<PriorMode>().unwrap(), PriorMode::Contour);
    }
}
