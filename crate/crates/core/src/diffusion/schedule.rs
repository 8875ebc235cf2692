use nalgebra::Vector3;

use crate::geometry::PointCloud;
use crate::{Error, Result};

const MIN_ALPHA_BAR: f64 = 1e-12;

/// Linear variance schedule. Steps are 1-based: `beta(1)` is the first.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::invalid(format!(
            "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let alpha_bar = alpha
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule {
        beta_start,
        beta_end,
        beta,
        alpha,
        alpha_bar,
    })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_range(&self) -> (f64, f64) {
        (self.beta_start, self.beta_end)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!(
                "timestep {t} outside 1..={}",
                self.steps()
            )));
        }
        Ok(())
    }
}

fn check_rows(cloud: &PointCloud, rows: &[Vector3<f64>], what: &str) -> Result<()> {
    if rows.len() != cloud.len() {
        return Err(Error::shape(format!(
            "{what} has {} rows for {} points",
            rows.len(),
            cloud.len()
        )));
    }
    Ok(())
}

/// Closed-form marginal `x_t = √ᾱ_t·x_0 + √(1-ᾱ_t)·noise`. Features of `x0`
/// are dropped.
pub fn forward_sample(
    sched: &NoiseSchedule,
    x0: &PointCloud,
    t: usize,
    noise: &[Vector3<f64>],
) -> Result<PointCloud> {
    sched.check_step(t)?;
    check_rows(x0, noise, "noise")?;
    let ab = sched.alpha_bar(t);
    let (signal, spread) = (ab.sqrt(), (1.0 - ab).sqrt());
    PointCloud::new(
        x0.positions()
            .iter()
            .zip(noise)
            .map(|(p, e)| p * signal + e * spread)
            .collect(),
    )
}

/// Inverts the forward marginal given a noise estimate:
/// `x̂_0 = (x_t - √(1-ᾱ_t)·ε̂) / √ᾱ_t`.
pub fn predict_x0(
    sched: &NoiseSchedule,
    x_t: &PointCloud,
    eps_hat: &[Vector3<f64>],
    t: usize,
) -> Result<PointCloud> {
    sched.check_step(t)?;
    check_rows(x_t, eps_hat, "noise estimate")?;
    let ab = sched.alpha_bar(t);
    if ab < MIN_ALPHA_BAR {
        return Err(Error::UnstableInversion(ab));
    }
    let (signal, spread) = (ab.sqrt(), (1.0 - ab).sqrt());
    PointCloud::new(
        x_t.positions()
            .iter()
            .zip(eps_hat)
            .map(|(x, e)| (x - e * spread) / signal)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_step_products() {
        let s = make_schedule(3, 0.1, 0.3).unwrap();
        for (got, want) in s.alpha_bars().iter().zip([0.9, 0.72, 0.504]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn single_step() {
        let s = make_schedule(1, 0.25, 0.25).unwrap();
        assert_eq!(s.alpha_bars(), &[0.75]);
    }

    #[test]
    fn invalid_ranges() {
        assert!(make_schedule(0, 0.1, 0.2).is_err());
        assert!(make_schedule(10, 0.0, 0.2).is_err());
        assert!(make_schedule(10, 0.3, 0.2).is_err());
        assert!(make_schedule(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn default_schedule_is_monotone() {
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        for w in s.betas().windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in s.alpha_bars().windows(2) {
            assert!(w[1] < w[0]);
        }
        let mut prod = 1.0;
        for t in 1..=100 {
            prod *= s.alpha(t);
            assert!((s.alpha_bar(t) - prod).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_scales_signal() {
        let s = make_schedule(10, 1e-3, 0.2).unwrap();
        let x0 = PointCloud::from_xyz(&[[1.0, -2.0, 0.5]]).unwrap();
        let xt = forward_sample(&s, &x0, 7, &[Vector3::zeros()]).unwrap();
        assert_eq!(xt.positions()[0], x0.positions()[0] * s.alpha_bar(7).sqrt());
        let back = predict_x0(&s, &xt, &[Vector3::zeros()], 7).unwrap();
        assert!((back.positions()[0] - x0.positions()[0]).norm() < 1e-14);
    }

    #[test]
    fn step_range_checked() {
        let s = make_schedule(10, 1e-3, 0.2).unwrap();
        let x0 = PointCloud::from_xyz(&[[1.0, 0.0, 0.0]]).unwrap();
        assert!(forward_sample(&s, &x0, 0, &[Vector3::zeros()]).is_err());
        assert!(forward_sample(&s, &x0, 11, &[Vector3::zeros()]).is_err());
        assert!(forward_sample(&s, &x0, 1, &[]).is_err());
    }

    #[test]
    fn unstable_inversion() {
        let s = make_schedule(400, 0.9, 0.99).unwrap();
        assert!(s.alpha_bar(400) < 1e-12);
        let x = PointCloud::from_xyz(&[[1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            predict_x0(&s, &x, &[Vector3::zeros()], 400),
            Err(Error::UnstableInversion(_))
        ));
    }
}
