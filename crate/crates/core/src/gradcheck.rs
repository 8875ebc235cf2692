//! Finite-difference check of the analytic gradients on small random
//! instances.
//!
//! The soft rasterizer is only piecewise smooth: a point entering or leaving
//! a pixel's disc, or the frustum, changes the depth discontinuously.
//! Components whose central-difference stencil straddles such a change are
//! skipped and counted.

use nalgebra::Vector3;
use rand::Rng as _;

use crate::denoiser::{denoise_forward, init_params, DenoiserDims, DenoiserParams};
use crate::diffusion::{cdm_loss, cdm_loss_grad, forward_sample, make_schedule, predict_x0, LossInputs, NoiseSchedule};
use crate::geometry::{orbit_viewpoints, Camera, Features, PointCloud, ViewpointSet};
use crate::rasterizer::{coverage, render_depth, render_depth_grad, SplatConfig};
use crate::rng::{self, streams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub instances: usize,
    pub n_points: usize,
    pub image_size: usize,
    pub views: usize,
    pub cond_dim: usize,
    pub hidden_dim: usize,
    pub time_embed_dim: usize,
    pub steps: usize,
    pub lambda: f64,
    pub point_size: f64,
    pub step: f64,
    /// Denominator floor of the relative error; central differences carry
    /// roughly `ε·|f|/h` of roundoff.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            instances: 10,
            n_points: 16,
            image_size: 16,
            views: 3,
            cond_dim: 2,
            hidden_dim: 8,
            time_embed_dim: 4,
            steps: 20,
            lambda: 0.5,
            point_size: 0.1,
            step: 1e-5,
            floor: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradcheckReport {
    /// Largest relative error of the parameter gradient of the total loss.
    pub loss_max_rel: f64,
    /// Largest relative error of the render gradient w.r.t. positions.
    pub render_max_rel: f64,
    pub checked: usize,
    /// Components skipped because coverage changed inside the stencil.
    pub skipped: usize,
}

impl GradcheckReport {
    pub fn max_rel(&self) -> f64 {
        self.loss_max_rel.max(self.render_max_rel)
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// One random loss instance.
pub struct Instance {
    pub sched: NoiseSchedule,
    pub params: DenoiserParams,
    pub x0: PointCloud,
    pub t: usize,
    pub noise: Vec<Vector3<f64>>,
    pub cond: Features,
    pub views: ViewpointSet,
    pub cfg: SplatConfig,
    pub lambda: f64,
}

impl Instance {
    pub fn random(gc: &GradcheckConfig, index: usize) -> Result<Self> {
        let mut r = rng::stream(gc.seed.wrapping_mul(1_000_003).wrapping_add(index as u64), streams::GRADCHECK);
        let n = gc.n_points;
        let sched = make_schedule(gc.steps, 1e-3, 0.1)?;
        let pts: Vec<_> = rng::normal_rows(&mut r, n).into_iter().map(|p| p * 0.4).collect();
        let x0 = PointCloud::new(pts)?;
        let noise = rng::normal_rows(&mut r, n);
        let cond = Features::from_rows(
            gc.cond_dim,
            (0..n * gc.cond_dim).map(|_| r.random_range(0.0..1.0)).collect(),
        )?;
        let size = gc.image_size;
        let half = size as f64 / 2.0;
        let radius = 3.0;
        let elevation = r.random_range(-0.5..0.5);
        let cam = Camera::look_at_orbit(
            r.random_range(0.0..std::f64::consts::TAU),
            elevation,
            radius,
            size as f64,
            [half, half],
            size,
            size,
        )?;
        let views = orbit_viewpoints(&cam, gc.views, radius, elevation)?;
        let mut cfg = SplatConfig::for_orbit(size, radius);
        cfg.point_size = gc.point_size;
        let dims = DenoiserDims {
            cond_dim: gc.cond_dim,
            hidden_dim: gc.hidden_dim,
            time_embed_dim: gc.time_embed_dim,
        };
        // A zero output layer would hide every upstream gradient.
        let mut params = init_params(r.random(), dims)?;
        let head = params.layer("head2").expect("head2 exists").range();
        for v in &mut params.values_mut()[head] {
            *v = 0.3 * rng::standard_normal(&mut r);
        }
        Ok(Self {
            sched,
            params,
            x0,
            t: r.random_range(1..=gc.steps),
            noise,
            cond,
            views,
            cfg,
            lambda: gc.lambda,
        })
    }

    pub fn inputs(&self) -> LossInputs<'_> {
        LossInputs {
            x0: &self.x0,
            t: self.t,
            noise: &self.noise,
            cond: &self.cond,
            views: &self.views,
            cfg: &self.cfg,
            lambda: self.lambda,
            targets: None,
        }
    }

    /// Coverage of the clean-cloud estimate in every view.
    fn x0_hat_coverage(&self, params: &DenoiserParams) -> Result<Vec<Vec<(usize, usize)>>> {
        let x_t = forward_sample(&self.sched, &self.x0, self.t, &self.noise)?.with_features(self.cond.clone())?;
        let (eps, _) = denoise_forward(params, &x_t, self.t, self.sched.steps())?;
        let x0_hat = predict_x0(&self.sched, &x_t, &eps, self.t)?;
        self.views
            .cameras()
            .iter()
            .map(|cam| coverage(&x0_hat, cam, &self.cfg))
            .collect()
    }
}

fn check_loss(inst: &Instance, gc: &GradcheckConfig, report: &mut GradcheckReport) -> Result<()> {
    let (_, analytic) = cdm_loss_grad(&inst.sched, &inst.params, &inst.inputs())?;
    let base_cov = inst.x0_hat_coverage(&inst.params)?;
    let mut p = inst.params.clone();
    for k in 0..p.len() {
        let orig = p.values()[k];
        let mut eval = |v: f64| -> Result<(f64, bool)> {
            p.values_mut()[k] = v;
            let total = cdm_loss(&inst.sched, &p, &inst.inputs())?.total;
            let same = inst.x0_hat_coverage(&p)? == base_cov;
            Ok((total, same))
        };
        let (plus, same_p) = eval(orig + gc.step)?;
        let (minus, same_m) = eval(orig - gc.step)?;
        p.values_mut()[k] = orig;
        if !(same_p && same_m) {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * gc.step);
        report.loss_max_rel = report.loss_max_rel.max(relative_error(analytic[k], numeric, gc.floor));
        report.checked += 1;
    }
    Ok(())
}

fn check_render(inst: &Instance, gc: &GradcheckConfig, report: &mut GradcheckReport) -> Result<()> {
    let mut r = rng::stream(gc.seed ^ 0x5eed, streams::GRADCHECK);
    let pixels = inst.cfg.width * inst.cfg.height;
    let upstream: Vec<f64> = (0..pixels).map(|_| r.random_range(-1.0..1.0)).collect();
    // Differencing per pixel first keeps untouched pixels exactly zero.
    let weighted_change = |cp: &PointCloud, cm: &PointCloud, cam: &Camera| -> Result<f64> {
        let (dp, dm) = (render_depth(cp, cam, &inst.cfg)?, render_depth(cm, cam, &inst.cfg)?);
        Ok(dp
            .depth()
            .iter()
            .zip(dm.depth())
            .zip(&upstream)
            .map(|((a, b), u)| (a - b) * u)
            .sum())
    };
    for cam in inst.views.cameras() {
        let analytic = render_depth_grad(&inst.x0, cam, &inst.cfg, &upstream)?;
        let base_cov = coverage(&inst.x0, cam, &inst.cfg)?;
        for i in 0..inst.x0.len() {
            for axis in 0..3 {
                let shifted = |delta: f64| {
                    let mut pts = inst.x0.positions().to_vec();
                    pts[i][axis] += delta;
                    PointCloud::new(pts)
                };
                let (cp, cm) = (shifted(gc.step)?, shifted(-gc.step)?);
                if coverage(&cp, cam, &inst.cfg)? != base_cov || coverage(&cm, cam, &inst.cfg)? != base_cov {
                    report.skipped += 1;
                    continue;
                }
                let numeric = weighted_change(&cp, &cm, cam)? / (2.0 * gc.step);
                report.render_max_rel = report
                    .render_max_rel
                    .max(relative_error(analytic[i][axis], numeric, gc.floor));
                report.checked += 1;
            }
        }
    }
    Ok(())
}

/// Runs the suite over `instances` random problems.
pub fn run_gradcheck(gc: &GradcheckConfig) -> Result<GradcheckReport> {
    if gc.instances == 0 || gc.step <= 0.0 {
        return Err(Error::invalid("gradcheck needs at least one instance and a positive step"));
    }
    let mut report = GradcheckReport::default();
    for i in 0..gc.instances {
        let inst = Instance::random(gc, i)?;
        check_loss(&inst, gc, &mut report)?;
        check_render(&inst, gc, &mut report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-6), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0, 1e-6) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn small_suite_passes() {
        let gc = GradcheckConfig {
            instances: 2,
            ..GradcheckConfig::default()
        };
        let r = run_gradcheck(&gc).unwrap();
        assert!(r.checked > 0);
        assert!(r.max_rel() < 1e-4, "{r:?}");
    }
}
