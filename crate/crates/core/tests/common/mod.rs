//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use cdm::geometry::Camera;
use cdm::rasterizer::SplatConfig;
use cdm::PointCloud;
use nalgebra::Vector3;

pub fn sq(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

/// O(N·M) nearest squared distances.
pub fn brute_nearest(from: &PointCloud, to: &PointCloud) -> Vec<f64> {
    from.positions()
        .iter()
        .map(|p| to.positions().iter().map(|q| sq(p, q)).fold(f64::INFINITY, f64::min))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn brute_chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    1000.0 * (mean(&brute_nearest(a, b)) + mean(&brute_nearest(b, a)))
}

/// `(precision, recall, f1)` at threshold `tau`.
pub fn brute_fscore(a: &PointCloud, b: &PointCloud, tau: f64) -> (f64, f64, f64) {
    let frac = |d: Vec<f64>| d.iter().filter(|&&x| x <= tau * tau).count() as f64 / d.len() as f64;
    let (p, r) = (frac(brute_nearest(a, b)), frac(brute_nearest(b, a)));
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Camera-frame point and pixel coordinates, or `None` outside the frustum.
pub fn project(cam: &Camera, cfg: &SplatConfig, p: &Vector3<f64>) -> Option<(Vector3<f64>, f64, f64)> {
    let pc = cam.rotation() * p + cam.translation();
    if pc.z < cfg.near || pc.z > cfg.far {
        return None;
    }
    let [cx, cy] = cam.principal_point();
    let u = cam.focal() * pc.x / pc.z + cx;
    let v = cam.focal() * pc.y / pc.z + cy;
    let inside = u >= 0.0 && u <= cfg.width as f64 && v >= 0.0 && v <= cfg.height as f64;
    inside.then_some((pc, u, v))
}

fn own_pixel(cfg: &SplatConfig, u: f64, v: f64) -> usize {
    let col = (u.floor() as usize).min(cfg.width - 1);
    let row = (v.floor() as usize).min(cfg.height - 1);
    row * cfg.width + col
}

/// Per-pixel nearest depth by testing every point against every pixel.
pub fn brute_zbuffer(cloud: &PointCloud, cam: &Camera, cfg: &SplatConfig) -> Vec<f64> {
    let r = cfg.point_size * cfg.width.min(cfg.height) as f64;
    let mut z = vec![f64::INFINITY; cfg.width * cfg.height];
    for p in cloud.positions() {
        let Some((pc, u, v)) = project(cam, cfg, p) else { continue };
        for row in 0..cfg.height {
            for col in 0..cfg.width {
                let (dx, dy) = (col as f64 + 0.5 - u, row as f64 + 0.5 - v);
                if dx * dx + dy * dy <= r * r {
                    let px = row * cfg.width + col;
                    z[px] = z[px].min(pc.z);
                }
            }
        }
        let px = own_pixel(cfg, u, v);
        z[px] = z[px].min(pc.z);
    }
    z
}

/// Fraction of points within `eps` of the z-buffer at their own pixel.
pub fn brute_visible_fraction(cloud: &PointCloud, cam: &Camera, cfg: &SplatConfig, eps: f64) -> f64 {
    let z = brute_zbuffer(cloud, cam, cfg);
    let visible = cloud
        .positions()
        .iter()
        .filter(|p| match project(cam, cfg, p) {
            Some((pc, u, v)) => pc.z <= z[own_pixel(cfg, u, v)] + eps,
            None => false,
        })
        .count();
    visible as f64 / cloud.len() as f64
}

/// Central difference of `f` along each coordinate of `x`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|k| {
            y[k] = x[k] + h;
            let plus = f(&y);
            y[k] = x[k] - h;
            let minus = f(&y);
            y[k] = x[k];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}
