//! Soft depth splatting.
//!
//! Every point in front of the camera whose projection lands inside the
//! image is drawn as a screen-space disc of radius
//! `point_size · min(width, height)` pixels. A pixel covered by points `k`
//! takes the depth
//!
//! ```text
//! depth = Σ w_k z_k / Σ w_k,   w_k = exp(-d_k² / σ² - z_k / softness)
//! ```
//!
//! where `d_k` is the distance from the pixel center to the projection of
//! point `k` and `σ` is the disc radius. Small `softness` approaches a hard
//! z-buffer. Uncovered pixels take `far` and are unmasked.
//!
//! Gradients treat the set of (point, pixel) coverage pairs as fixed and
//! differentiate the depths and weights through the projection.

pub mod rast;

use nalgebra::Vector3;

use crate::geometry::{Camera, PointCloud};
use crate::{Error, Result};

/// Parameters of the splatting kernel and raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatConfig {
    pub point_size: f64,
    pub width: usize,
    pub height: usize,
    pub softness: f64,
    pub near: f64,
    pub far: f64,
}

impl SplatConfig {
    pub const DEFAULT_POINT_SIZE: f64 = 0.04;
    pub const DEFAULT_SOFTNESS: f64 = 0.05;

    pub fn new(
        point_size: f64,
        width: usize,
        height: usize,
        softness: f64,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let cfg = Self {
            point_size,
            width,
            height,
            softness,
            near,
            far,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults for a `size × size` raster whose far plane sits at 1.5× the
    /// orbit radius.
    pub fn for_orbit(size: usize, orbit_radius: f64) -> Self {
        Self {
            point_size: Self::DEFAULT_POINT_SIZE,
            width: size,
            height: size,
            softness: Self::DEFAULT_SOFTNESS,
            near: 0.1,
            far: 1.5 * orbit_radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.point_size > 0.0) {
            return Err(Error::invalid("point_size must be positive"));
        }
        if !(self.softness > 0.0) {
            return Err(Error::invalid("softness must be positive"));
        }
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(Error::invalid("need 0 < near < far < inf"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("raster size must be positive"));
        }
        Ok(())
    }

    /// Splat radius in pixels; also the screen-space falloff scale σ.
    pub fn radius_px(&self) -> f64 {
        self.point_size * self.width.min(self.height) as f64
    }

    fn check_camera(&self, cam: &Camera) -> Result<()> {
        if cam.width() != self.width || cam.height() != self.height {
            return Err(Error::shape(format!(
                "camera is {}x{} but raster is {}x{}",
                cam.width(),
                cam.height(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }
}

/// Rendered depth raster with coverage mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    mask: Vec<bool>,
    background_depth: f64,
}

impl DepthImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major depths.
    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn background_depth(&self) -> f64 {
        self.background_depth
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.depth[row * self.width + col]
    }

    pub fn covered(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    /// Mean over pixels of the squared depth difference.
    pub fn mse(&self, other: &DepthImage) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::shape("depth images differ in size"));
        }
        let sum: f64 = self
            .depth
            .iter()
            .zip(&other.depth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum / self.depth.len() as f64)
    }
}

/// One point as seen by the camera, if it is inside the frustum.
#[derive(Debug, Clone, Copy)]
struct Projected {
    cam: Vector3<f64>,
    u: f64,
    v: f64,
}

fn project_point(cam: &Camera, cfg: &SplatConfig, p: &Vector3<f64>) -> Option<Projected> {
    let pc = cam.to_camera(p);
    if !(pc.z >= cfg.near && pc.z <= cfg.far) {
        return None;
    }
    let [u, v] = cam.project(&pc);
    let inside = (0.0..=cfg.width as f64).contains(&u) && (0.0..=cfg.height as f64).contains(&v);
    inside.then_some(Projected { cam: pc, u, v })
}

/// Calls `f(pixel_index, col, row, d²)` for every pixel center inside the
/// disc around `(u, v)`.
fn for_each_covered(cfg: &SplatConfig, u: f64, v: f64, mut f: impl FnMut(usize, usize, usize, f64)) {
    let r = cfg.radius_px();
    let r2 = r * r;
    let col_lo = ((u - r - 0.5).ceil().max(0.0)) as usize;
    let col_hi = ((u + r - 0.5).floor()).min(cfg.width as f64 - 1.0);
    let row_lo = ((v - r - 0.5).ceil().max(0.0)) as usize;
    let row_hi = ((v + r - 0.5).floor()).min(cfg.height as f64 - 1.0);
    if col_hi < 0.0 || row_hi < 0.0 {
        return;
    }
    for row in row_lo..=row_hi as usize {
        let dy = row as f64 + 0.5 - v;
        for col in col_lo..=col_hi as usize {
            let dx = col as f64 + 0.5 - u;
            let d2 = dx * dx + dy * dy;
            if d2 <= r2 {
                f(row * cfg.width + col, col, row, d2);
            }
        }
    }
}

fn log_weight(cfg: &SplatConfig, d2: f64, z: f64) -> f64 {
    let sigma = cfg.radius_px();
    -d2 / (sigma * sigma) - z / cfg.softness
}

/// Per-pixel normalizers of the soft-min: running max exponent, Σw, Σw·z.
struct Accum {
    max_e: Vec<f64>,
    sum_w: Vec<f64>,
    sum_wz: Vec<f64>,
}

fn accumulate(projected: &[Option<Projected>], cfg: &SplatConfig) -> Accum {
    let n_px = cfg.width * cfg.height;
    let mut acc = Accum {
        max_e: vec![f64::NEG_INFINITY; n_px],
        sum_w: vec![0.0; n_px],
        sum_wz: vec![0.0; n_px],
    };
    for p in projected.iter().flatten() {
        let z = p.cam.z;
        for_each_covered(cfg, p.u, p.v, |px, _, _, d2| {
            let e = log_weight(cfg, d2, z);
            if e > acc.max_e[px] {
                let rescale = (acc.max_e[px] - e).exp();
                acc.sum_w[px] *= rescale;
                acc.sum_wz[px] *= rescale;
                acc.max_e[px] = e;
            }
            let w = (e - acc.max_e[px]).exp();
            acc.sum_w[px] += w;
            acc.sum_wz[px] += w * z;
        });
    }
    acc
}

fn project_all(cloud: &PointCloud, cam: &Camera, cfg: &SplatConfig) -> Result<Vec<Option<Projected>>> {
    cfg.validate()?;
    cfg.check_camera(cam)?;
    Ok(cloud
        .positions()
        .iter()
        .map(|p| project_point(cam, cfg, p))
        .collect())
}

pub fn render_depth(cloud: &PointCloud, cam: &Camera, cfg: &SplatConfig) -> Result<DepthImage> {
    let projected = project_all(cloud, cam, cfg)?;
    let acc = accumulate(&projected, cfg);
    let mask: Vec<bool> = acc.sum_w.iter().map(|&w| w > 0.0).collect();
    let depth = acc
        .sum_wz
        .iter()
        .zip(&acc.sum_w)
        .map(|(&wz, &w)| if w > 0.0 { wz / w } else { cfg.far })
        .collect();
    Ok(DepthImage {
        width: cfg.width,
        height: cfg.height,
        depth,
        mask,
        background_depth: cfg.far,
    })
}

/// Gradient of `Σ_pixels upstream · depth` with respect to world positions.
pub fn render_depth_grad(
    cloud: &PointCloud,
    cam: &Camera,
    cfg: &SplatConfig,
    upstream: &[f64],
) -> Result<Vec<Vector3<f64>>> {
    if upstream.len() != cfg.width * cfg.height {
        return Err(Error::shape(format!(
            "upstream has {} values for a {}x{} raster",
            upstream.len(),
            cfg.width,
            cfg.height
        )));
    }
    let projected = project_all(cloud, cam, cfg)?;
    let acc = accumulate(&projected, cfg);
    let sigma2 = cfg.radius_px().powi(2);
    let focal = cam.focal();
    let rt = cam.rotation().transpose();

    let grads = projected
        .iter()
        .map(|p| {
            let Some(p) = p else {
                return Vector3::zeros();
            };
            let z = p.cam.z;
            // d(objective)/d(z) explicit, and d(objective)/d(u), d(v) via the
            // weight exponent.
            let (mut gz, mut gu, mut gv) = (0.0, 0.0, 0.0);
            for_each_covered(cfg, p.u, p.v, |px, col, row, d2| {
                let g = upstream[px];
                if g == 0.0 {
                    return;
                }
                let w = (log_weight(cfg, d2, z) - acc.max_e[px]).exp() / acc.sum_w[px];
                let depth = acc.sum_wz[px] / acc.sum_w[px];
                let d_depth_d_e = w * (z - depth);
                gz += g * (w - d_depth_d_e / cfg.softness);
                gu += g * d_depth_d_e * 2.0 * (col as f64 + 0.5 - p.u) / sigma2;
                gv += g * d_depth_d_e * 2.0 * (row as f64 + 0.5 - p.v) / sigma2;
            });
            let g_cam = Vector3::new(
                gu * focal / z,
                gv * focal / z,
                gz - (gu * p.cam.x + gv * p.cam.y) * focal / (z * z),
            );
            rt * g_cam
        })
        .collect();
    Ok(grads)
}

/// Coverage mask only.
pub fn render_silhouette(cloud: &PointCloud, cam: &Camera, cfg: &SplatConfig) -> Result<Vec<bool>> {
    let projected = project_all(cloud, cam, cfg)?;
    let mut mask = vec![false; cfg.width * cfg.height];
    for p in projected.iter().flatten() {
        for_each_covered(cfg, p.u, p.v, |px, _, _, _| mask[px] = true);
    }
    Ok(mask)
}

/// Every `(point, pixel)` pair that contributes to the render, in point
/// order. Two clouds with equal coverage differ only smoothly in depth.
pub fn coverage(cloud: &PointCloud, cam: &Camera, cfg: &SplatConfig) -> Result<Vec<(usize, usize)>> {
    let projected = project_all(cloud, cam, cfg)?;
    let mut pairs = Vec::new();
    for (i, p) in projected.iter().enumerate() {
        if let Some(p) = p {
            for_each_covered(cfg, p.u, p.v, |px, _, _, _| pairs.push((i, px)));
        }
    }
    Ok(pairs)
}

/// Nearest camera-frame depth per pixel over all points whose disc covers
/// the pixel center or whose projection falls inside the pixel; `+∞` where
/// nothing lands.
pub fn hard_zbuffer(cloud: &PointCloud, cam: &Camera, cfg: &SplatConfig) -> Result<Vec<f64>> {
    let projected = project_all(cloud, cam, cfg)?;
    let mut zbuf = vec![f64::INFINITY; cfg.width * cfg.height];
    for p in projected.iter().flatten() {
        let z = p.cam.z;
        for_each_covered(cfg, p.u, p.v, |px, _, _, _| zbuf[px] = zbuf[px].min(z));
        let px = pixel_of(cfg, p.u, p.v);
        zbuf[px] = zbuf[px].min(z);
    }
    Ok(zbuf)
}

/// Camera-frame position and pixel coordinates of a world point, if it lies
/// inside the render frustum.
pub fn frustum_projection(cam: &Camera, cfg: &SplatConfig, p: &Vector3<f64>) -> Option<(Vector3<f64>, [f64; 2])> {
    project_point(cam, cfg, p).map(|p| (p.cam, [p.u, p.v]))
}

/// Index of the pixel containing image coordinates `(u, v)`, clamped to the
/// raster.
pub fn pixel_of(cfg: &SplatConfig, u: f64, v: f64) -> usize {
    let col = (u.floor().max(0.0) as usize).min(cfg.width - 1);
    let row = (v.floor().max(0.0) as usize).min(cfg.height - 1);
    row * cfg.width + col
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn axis_camera(size: usize) -> Camera {
        // Principal point on a pixel center.
        let c = size as f64 / 2.0 + 0.5;
        Camera::from_extrinsics(Matrix3::identity(), Vector3::zeros(), size as f64, [c, c], size, size)
            .unwrap()
    }

    fn cfg(size: usize) -> SplatConfig {
        SplatConfig::new(0.1, size, size, 0.05, 0.1, 10.0).unwrap()
    }

    #[test]
    fn single_axis_point_depth() {
        let cam = axis_camera(16);
        let cloud = PointCloud::from_xyz(&[[0.0, 0.0, 2.0]]).unwrap();
        let img = render_depth(&cloud, &cam, &cfg(16)).unwrap();
        assert_eq!(img.at(8, 8), 2.0);
        assert!(img.covered(8, 8));
        for (d, m) in img.depth().iter().zip(img.mask()) {
            if *m {
                assert_eq!(*d, 2.0);
            } else {
                assert_eq!(*d, 10.0);
            }
        }
    }

    #[test]
    fn behind_camera_is_empty() {
        let cam = axis_camera(16);
        let cloud = PointCloud::from_xyz(&[[0.0, 0.0, -2.0]]).unwrap();
        let img = render_depth(&cloud, &cam, &cfg(16)).unwrap();
        assert!(img.mask().iter().all(|m| !m));
        assert!(img.depth().iter().all(|&d| d == 10.0));
        assert!(render_silhouette(&cloud, &cam, &cfg(16)).unwrap().iter().all(|m| !m));
    }

    #[test]
    fn soft_min_limit() {
        let cam = axis_camera(16);
        let mut c = cfg(16);
        // Same projection: both on the optical axis.
        let cloud = PointCloud::from_xyz(&[[0.0, 0.0, 1.0], [0.0, 0.0, 3.0]]).unwrap();
        c.softness = 0.01;
        let img = render_depth(&cloud, &cam, &c).unwrap();
        assert!((img.at(8, 8) - 1.0).abs() < 1e-12);
        // Larger softness blends toward the mean.
        c.softness = 1e6;
        let img = render_depth(&cloud, &cam, &c).unwrap();
        assert!((img.at(8, 8) - 2.0).abs() < 1e-5);
    }

    #[test]
    fn silhouette_matches_enumerated_disc() {
        let cam = axis_camera(32);
        let c = cfg(32);
        let cloud = PointCloud::from_xyz(&[[0.1, -0.05, 2.0]]).unwrap();
        let sil = render_silhouette(&cloud, &cam, &c).unwrap();
        let pc = cam.to_camera(&cloud.positions()[0]);
        let [u, v] = cam.project(&pc);
        let r = c.radius_px();
        for row in 0..32 {
            for col in 0..32 {
                let d2 = (col as f64 + 0.5 - u).powi(2) + (row as f64 + 0.5 - v).powi(2);
                assert_eq!(sil[row * 32 + col], d2 <= r * r, "pixel ({row},{col})");
            }
        }
        assert!(sil.iter().filter(|&&m| m).count() > 1);
    }

    #[test]
    fn zero_upstream_zero_grad() {
        let cam = axis_camera(16);
        let cloud = PointCloud::from_xyz(&[[0.0, 0.0, 2.0], [0.05, 0.0, 2.5]]).unwrap();
        let g = render_depth_grad(&cloud, &cam, &cfg(16), &vec![0.0; 256]).unwrap();
        assert!(g.iter().all(|v| *v == Vector3::zeros()));
    }

    #[test]
    fn axis_point_grad_is_third_row() {
        let r = Camera::look_at_orbit(0.4, 0.3, 3.0, 16.0, [8.5, 8.5], 16, 16).unwrap();
        // World point that lands on the principal point at depth 2.
        let p_cam = Vector3::new(0.0, 0.0, 2.0);
        let p = r.rotation().transpose() * (p_cam - r.translation());
        let cloud = PointCloud::new(vec![p]).unwrap();
        let mut up = vec![0.0; 256];
        up[8 * 16 + 8] = 1.0;
        let g = render_depth_grad(&cloud, &r, &cfg(16), &up).unwrap()[0];
        let row = r.rotation().row(2).transpose();
        assert!((g - row).norm() < 1e-12, "{g} vs {row}");
    }

    #[test]
    fn raster_camera_mismatch() {
        let cam = axis_camera(16);
        let cloud = PointCloud::from_xyz(&[[0.0, 0.0, 2.0]]).unwrap();
        assert!(render_depth(&cloud, &cam, &cfg(8)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SplatConfig::new(0.0, 8, 8, 0.05, 0.1, 1.0).is_err());
        assert!(SplatConfig::new(0.04, 8, 8, 0.0, 0.1, 1.0).is_err());
        assert!(SplatConfig::new(0.04, 8, 8, 0.05, 1.0, 1.0).is_err());
    }
}
