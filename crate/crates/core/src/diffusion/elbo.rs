//! Per-term decomposition of the variational bound, for diagnostics.
//!
//! All Gaussians are isotropic: a mean vector and one scalar variance.

use nalgebra::Vector3;

use super::schedule::{forward_sample, NoiseSchedule};
use crate::denoiser::{denoise_forward, DenoiserParams};
use crate::geometry::{Features, PointCloud, ViewpointSet};
use crate::rasterizer::{render_depth, SplatConfig};
use crate::rng::{self, streams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPair {
    pub q_mean: Vec<f64>,
    pub q_var: f64,
    pub p_mean: Vec<f64>,
    pub p_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboInputs {
    /// `q(x_{t-1} | x_t, x_0)` against `p_θ(x_{t-1} | x_t)` for t = 2..=T.
    pub transitions: Vec<GaussianPair>,
    /// `q(x_T | x_0)` against `p(x_T) = N(0, I)`.
    pub terminal: GaussianPair,
    /// Decoder `p_θ(x_0 | x_1)` as (mean, variance), evaluated at `x0`.
    pub decoder_mean: Vec<f64>,
    pub decoder_var: f64,
    pub x0: Vec<f64>,
    /// Σ over views of depth MSE between renders of `x_t` and `x_0`, for
    /// t = 1..=T.
    pub prior_distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboReport {
    pub l_t_minus_1: Vec<f64>,
    pub prior_terms: Vec<f64>,
    pub l_t: f64,
    pub l_0: f64,
}

impl ElboReport {
    /// Bound with the consistency terms added.
    pub fn total(&self) -> f64 {
        self.l_t_minus_1.iter().sum::<f64>() + self.prior_terms.iter().sum::<f64>() + self.l_t + self.l_0
    }
}

fn check_var(v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("variance must be positive, got {v}")));
    }
    Ok(())
}

/// `KL(N(μq, σq² I) ‖ N(μp, σp² I))`.
pub fn gaussian_kl(q_mean: &[f64], q_var: f64, p_mean: &[f64], p_var: f64) -> Result<f64> {
    check_var(q_var)?;
    check_var(p_var)?;
    if q_mean.len() != p_mean.len() {
        return Err(Error::shape("KL between Gaussians of different dimension"));
    }
    let d = q_mean.len() as f64;
    let sq: f64 = q_mean.iter().zip(p_mean).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * (d * (q_var / p_var - 1.0 + (p_var / q_var).ln()) + sq / p_var))
}

/// `-log N(x; μ, σ² I)`.
pub fn gaussian_nll(x: &[f64], mean: &[f64], var: f64) -> Result<f64> {
    check_var(var)?;
    if x.len() != mean.len() {
        return Err(Error::shape("NLL dimension mismatch"));
    }
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * (sq / var + x.len() as f64 * (std::f64::consts::TAU * var).ln()))
}

pub fn elbo_report(inputs: &ElboInputs, lambda: f64) -> Result<ElboReport> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let l_t_minus_1 = inputs
        .transitions
        .iter()
        .map(|g| gaussian_kl(&g.q_mean, g.q_var, &g.p_mean, g.p_var))
        .collect::<Result<Vec<_>>>()?;
    let term = &inputs.terminal;
    let l_t = gaussian_kl(&term.q_mean, term.q_var, &term.p_mean, term.p_var)?;
    let l_0 = gaussian_nll(&inputs.x0, &inputs.decoder_mean, inputs.decoder_var)?;
    let prior_terms = inputs.prior_distances.iter().map(|d| lambda * d).collect();
    Ok(ElboReport {
        l_t_minus_1,
        prior_terms,
        l_t,
        l_0,
    })
}

fn flatten(points: impl IntoIterator<Item = Vector3<f64>>) -> Vec<f64> {
    points.into_iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// Builds [`ElboInputs`] for a model: one draw of `x_t ~ q(x_t | x_0)` per
/// step, the exact forward posterior, and the model's reverse Gaussian.
pub fn elbo_inputs_for_model(
    sched: &NoiseSchedule,
    params: &DenoiserParams,
    x0: &PointCloud,
    condition: &mut dyn FnMut(&PointCloud) -> Result<Features>,
    views: &ViewpointSet,
    cfg: &SplatConfig,
    seed: u64,
) -> Result<ElboInputs> {
    let steps = sched.steps();
    let mut rng = rng::stream(seed, streams::SAMPLE);
    let targets = views
        .cameras()
        .iter()
        .map(|c| render_depth(x0, c, cfg))
        .collect::<Result<Vec<_>>>()?;
    let x0_flat = flatten(x0.positions().iter().copied());

    let mut transitions = Vec::with_capacity(steps.saturating_sub(1));
    let mut prior_distances = Vec::with_capacity(steps);
    let mut decoder_mean = Vec::new();
    for t in 1..=steps {
        let noise = rng::normal_rows(&mut rng, x0.len());
        let x_t = forward_sample(sched, x0, t, &noise)?;
        prior_distances.push(
            views
                .cameras()
                .iter()
                .zip(&targets)
                .map(|(c, target)| render_depth(&x_t, c, cfg)?.mse(target))
                .sum::<Result<f64>>()?,
        );

        let conditioned = x_t.clone().with_features(condition(&x_t)?)?;
        let (eps_hat, _) = denoise_forward(params, &conditioned, t, steps)?;
        let (alpha, beta, ab) = (sched.alpha(t), sched.beta(t), sched.alpha_bar(t));
        let p_mean = flatten(
            x_t.positions()
                .iter()
                .zip(&eps_hat)
                .map(|(x, e)| (x - e * (beta / (1.0 - ab).sqrt())) / alpha.sqrt()),
        );
        if t == 1 {
            decoder_mean = p_mean;
            continue;
        }
        let ab_prev = sched.alpha_bar(t - 1);
        let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let ct = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let q_mean = flatten(
            x0.positions()
                .iter()
                .zip(x_t.positions())
                .map(|(a, b)| a * c0 + b * ct),
        );
        transitions.push(GaussianPair {
            q_mean,
            q_var: (1.0 - ab_prev) / (1.0 - ab) * beta,
            p_mean,
            p_var: beta,
        });
    }

    let ab_t = sched.alpha_bar(steps);
    let terminal = GaussianPair {
        q_mean: x0_flat.iter().map(|v| v * ab_t.sqrt()).collect(),
        q_var: 1.0 - ab_t,
        p_mean: vec![0.0; x0_flat.len()],
        p_var: 1.0,
    };
    Ok(ElboInputs {
        transitions,
        terminal,
        decoder_mean,
        decoder_var: sched.beta(1),
        x0: x0_flat,
        prior_distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_shift_kl() {
        let kl = gaussian_kl(&[0.0], 1.0, &[1.0], 1.0).unwrap();
        assert!((kl - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_gaussians_have_zero_kl() {
        let m = vec![0.3, -1.0, 2.0];
        assert_eq!(gaussian_kl(&m, 0.7, &m, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn kl_matches_scalar_formula() {
        // KL(N(a, s) ‖ N(b, v)) = 0.5 (s/v + (a-b)²/v - 1 + ln(v/s)).
        let (a, s, b, v) = (0.4_f64, 0.3_f64, -0.2_f64, 1.7_f64);
        let want = 0.5 * (s / v + (a - b).powi(2) / v - 1.0 + (v / s).ln());
        assert!((gaussian_kl(&[a], s, &[b], v).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_variance_rejected() {
        assert!(gaussian_kl(&[0.0], 0.0, &[0.0], 1.0).is_err());
        assert!(gaussian_nll(&[0.0], &[0.0], -1.0).is_err());
    }

    #[test]
    fn nll_of_standard_normal_at_mean() {
        let nll = gaussian_nll(&[0.0, 0.0], &[0.0, 0.0], 1.0).unwrap();
        assert!((nll - std::f64::consts::TAU.ln()).abs() < 1e-15);
    }
}
