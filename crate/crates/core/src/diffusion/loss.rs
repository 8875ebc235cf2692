//! Training objective: noise-prediction MSE plus `λ ×` the multi-view depth
//! consistency penalty.
//!
//! The penalty compares depth renders of the denoiser's clean-cloud estimate
//! `x̂_0 = predict_x0(x_t, ε̂, t)` with renders of the ground truth `x_0`
//! from every prior viewpoint. Rendering `x_t` itself would make the term
//! independent of the parameters.

use nalgebra::Vector3;

use super::schedule::{forward_sample, predict_x0, NoiseSchedule};
use crate::denoiser::{denoise_backward, denoise_forward, DenoiserParams};
use crate::geometry::{Features, PointCloud, ViewpointSet};
use crate::rasterizer::{render_depth, render_depth_grad, DepthImage, SplatConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub diffusion_loss: f64,
    pub prior_constraint: f64,
    pub lambda: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(diffusion_loss: f64, prior_constraint: f64, lambda: f64) -> Self {
        Self {
            diffusion_loss,
            prior_constraint,
            lambda,
            total: diffusion_loss + lambda * prior_constraint,
        }
    }
}

/// One training example at one timestep.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub x0: &'a PointCloud,
    pub t: usize,
    pub noise: &'a [Vector3<f64>],
    /// Condition features projected onto `x_t`.
    pub cond: &'a Features,
    pub views: &'a ViewpointSet,
    pub cfg: &'a SplatConfig,
    pub lambda: f64,
    /// Renders of `x0` for each view, if already computed.
    pub targets: Option<&'a [DepthImage]>,
}

struct Forward {
    eps_hat: Vec<Vector3<f64>>,
    cache: crate::denoiser::ForwardCache,
    x0_hat: PointCloud,
    renders: Vec<DepthImage>,
    targets: Vec<DepthImage>,
    breakdown: LossBreakdown,
}

fn noisy_input(sched: &NoiseSchedule, inp: &LossInputs<'_>) -> Result<PointCloud> {
    if !(inp.lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    if inp.cond.rows() != inp.x0.len() {
        return Err(Error::shape(format!(
            "{} condition rows for {} points",
            inp.cond.rows(),
            inp.x0.len()
        )));
    }
    forward_sample(sched, inp.x0, inp.t, inp.noise)?.with_features(inp.cond.clone())
}

fn diffusion_mse(eps_hat: &[Vector3<f64>], noise: &[Vector3<f64>]) -> f64 {
    let sum: f64 = eps_hat
        .iter()
        .zip(noise)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    sum / (3 * noise.len()) as f64
}

fn forward(sched: &NoiseSchedule, params: &DenoiserParams, inp: &LossInputs<'_>) -> Result<Forward> {
    let x_t = noisy_input(sched, inp)?;
    let (eps_hat, cache) = denoise_forward(params, &x_t, inp.t, sched.steps())?;
    let diffusion_loss = diffusion_mse(&eps_hat, inp.noise);

    let x0_hat = predict_x0(sched, &x_t, &eps_hat, inp.t)?;
    let targets = match inp.targets {
        Some(t) if t.len() == inp.views.len() => t.to_vec(),
        Some(_) => return Err(Error::shape("one target render per view required")),
        None => inp
            .views
            .cameras()
            .iter()
            .map(|cam| render_depth(inp.x0, cam, inp.cfg))
            .collect::<Result<_>>()?,
    };
    let renders = inp
        .views
        .cameras()
        .iter()
        .map(|cam| render_depth(&x0_hat, cam, inp.cfg))
        .collect::<Result<Vec<_>>>()?;
    let prior_constraint = renders
        .iter()
        .zip(&targets)
        .map(|(r, t)| r.mse(t))
        .sum::<Result<f64>>()?;

    Ok(Forward {
        eps_hat,
        cache,
        x0_hat,
        renders,
        targets,
        breakdown: LossBreakdown::new(diffusion_loss, prior_constraint, inp.lambda),
    })
}

pub fn cdm_loss(sched: &NoiseSchedule, params: &DenoiserParams, inp: &LossInputs<'_>) -> Result<LossBreakdown> {
    forward(sched, params, inp).map(|f| f.breakdown)
}

/// Noise-prediction loss alone, `mean ‖ε - ε̂‖²`.
pub fn pc2_loss(sched: &NoiseSchedule, params: &DenoiserParams, inp: &LossInputs<'_>) -> Result<f64> {
    let x_t = noisy_input(sched, inp)?;
    let (eps_hat, _) = denoise_forward(params, &x_t, inp.t, sched.steps())?;
    Ok(diffusion_mse(&eps_hat, inp.noise))
}

/// Loss and its exact gradient with respect to the flat parameter vector.
pub fn cdm_loss_grad(
    sched: &NoiseSchedule,
    params: &DenoiserParams,
    inp: &LossInputs<'_>,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let f = forward(sched, params, inp)?;
    let n = inp.x0.len();
    let scale = 2.0 / (3 * n) as f64;
    let mut upstream: Vec<Vector3<f64>> = f
        .eps_hat
        .iter()
        .zip(inp.noise)
        .map(|(a, b)| (a - b) * scale)
        .collect();

    if inp.lambda > 0.0 {
        let ab = sched.alpha_bar(inp.t);
        // d x̂_0 / d ε̂ = -√(1-ᾱ)/√ᾱ, elementwise.
        let chain = -inp.lambda * ((1.0 - ab) / ab).sqrt();
        for ((cam, render), target) in inp.views.cameras().iter().zip(&f.renders).zip(&f.targets) {
            let pixels = render.depth().len() as f64;
            let d_depth: Vec<f64> = render
                .depth()
                .iter()
                .zip(target.depth())
                .map(|(r, t)| 2.0 * (r - t) / pixels)
                .collect();
            let g = render_depth_grad(&f.x0_hat, cam, inp.cfg, &d_depth)?;
            for (u, gi) in upstream.iter_mut().zip(g) {
                *u += gi * chain;
            }
        }
    }

    let grad = denoise_backward(params, &f.cache, &upstream)?;
    Ok((f.breakdown, grad.params))
}
