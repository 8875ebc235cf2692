//! `key = value` run configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::conditioning::{ConditionSpec, PriorMode};
use crate::diffusion::{make_schedule, NoiseSchedule};
use crate::rasterizer::SplatConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub steps_t: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub lambda: f64,
    pub views: usize,
    pub point_size: f64,
    pub image_size: usize,
    pub softness: f64,
    pub prior_mode: PriorMode,
    pub prior_path: Option<PathBuf>,
    /// Defaults to `softness` when unset.
    pub visibility_eps: Option<f64>,
    pub n_points: usize,
    pub n_items: usize,
    pub train_fraction: f64,
    pub hidden_dim: usize,
    pub time_embed_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_steps: usize,
    pub seed: u64,
    pub camera_radius: f64,
    pub elevation_deg: f64,
    pub focal_scale: f64,
    pub sample_seeds: usize,
    pub log_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            steps_t: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
            lambda: 0.1,
            views: 10,
            point_size: SplatConfig::DEFAULT_POINT_SIZE,
            image_size: 224,
            softness: SplatConfig::DEFAULT_SOFTNESS,
            prior_mode: PriorMode::None,
            prior_path: None,
            visibility_eps: None,
            n_points: 4096,
            n_items: 64,
            train_fraction: 0.8,
            hidden_dim: 64,
            time_embed_dim: 16,
            learning_rate: 1e-3,
            batch_size: 8,
            train_steps: 5000,
            seed: 0,
            camera_radius: 3.0,
            elevation_deg: 20.0,
            focal_scale: 1.0,
            sample_seeds: 1,
            log_every: 50,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = '{value}': {e}")))
}

impl RunConfig {
    /// Sets one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "T" => self.steps_t = parse(key, v)?,
            "beta_start" => self.beta_start = parse(key, v)?,
            "beta_end" => self.beta_end = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "H" => self.views = parse(key, v)?,
            "point_size" => self.point_size = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "softness" => self.softness = parse(key, v)?,
            "prior_mode" => self.prior_mode = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "prior_path" => self.prior_path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "visibility_eps" => self.visibility_eps = Some(parse(key, v)?),
            "n_points" => self.n_points = parse(key, v)?,
            "n_items" => self.n_items = parse(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "hidden_dim" => self.hidden_dim = parse(key, v)?,
            "time_embed_dim" => self.time_embed_dim = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "steps" => self.train_steps = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "camera_radius" => self.camera_radius = parse(key, v)?,
            "elevation_deg" => self.elevation_deg = parse(key, v)?,
            "focal_scale" => self.focal_scale = parse(key, v)?,
            "sample_seeds" => self.sample_seeds = parse(key, v)?,
            "log_every" => self.log_every = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides, then validates.
    pub fn with_overrides<S: AsRef<str>>(mut self, overrides: &[S]) -> Result<Self> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{}' is not key=value", o.as_ref())))?;
            self.set(k, v)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("T", self.steps_t.to_string());
        kv("beta_start", self.beta_start.to_string());
        kv("beta_end", self.beta_end.to_string());
        kv("lambda", self.lambda.to_string());
        kv("H", self.views.to_string());
        kv("point_size", self.point_size.to_string());
        kv("image_size", self.image_size.to_string());
        kv("softness", self.softness.to_string());
        kv("prior_mode", self.prior_mode.to_string());
        if let Some(p) = &self.prior_path {
            kv("prior_path", p.display().to_string());
        }
        if let Some(e) = self.visibility_eps {
            kv("visibility_eps", e.to_string());
        }
        kv("n_points", self.n_points.to_string());
        kv("n_items", self.n_items.to_string());
        kv("train_fraction", self.train_fraction.to_string());
        kv("hidden_dim", self.hidden_dim.to_string());
        kv("time_embed_dim", self.time_embed_dim.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("steps", self.train_steps.to_string());
        kv("seed", self.seed.to_string());
        kv("camera_radius", self.camera_radius.to_string());
        kv("elevation_deg", self.elevation_deg.to_string());
        kv("focal_scale", self.focal_scale.to_string());
        kv("sample_seeds", self.sample_seeds.to_string());
        kv("log_every", self.log_every.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        make_schedule(self.steps_t, self.beta_start, self.beta_end)
            .map_err(|e| Error::Config(e.to_string()))?;
        self.splat_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.condition_spec()?;
        if !(self.lambda >= 0.0) {
            return fail("lambda must be non-negative");
        }
        if self.views == 0 {
            return fail("H must be at least 1");
        }
        if self.n_points < 8 {
            return fail("n_points must be at least 8");
        }
        if self.n_items == 0 {
            return fail("n_items must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail("train_fraction must lie in (0, 1)");
        }
        if self.hidden_dim == 0 || self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return fail("hidden_dim must be positive and time_embed_dim positive and even");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.camera_radius > 1.0) {
            return fail("camera_radius must exceed the unit object radius");
        }
        if !(self.elevation_deg.abs() < 90.0) {
            return fail("elevation_deg must lie in (-90, 90)");
        }
        if !(self.focal_scale > 0.0) {
            return fail("focal_scale must be positive");
        }
        if self.sample_seeds == 0 || self.log_every == 0 {
            return fail("sample_seeds and log_every must be positive");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(self.steps_t, self.beta_start, self.beta_end)
    }

    pub fn splat_config(&self) -> SplatConfig {
        SplatConfig {
            point_size: self.point_size,
            softness: self.softness,
            ..SplatConfig::for_orbit(self.image_size, self.camera_radius)
        }
    }

    pub fn condition_spec(&self) -> Result<ConditionSpec> {
        ConditionSpec::new(
            self.prior_mode,
            self.prior_path.clone(),
            self.visibility_eps.unwrap_or(self.softness),
        )
    }

    pub fn elevation(&self) -> f64 {
        self.elevation_deg.to_radians()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn text_roundtrip() {
        let cfg = RunConfig::default()
            .with_overrides(&["lambda=0.25", "H = 4", "prior_mode=contour", "visibility_eps=0.1"])
            .unwrap();
        assert_eq!(cfg.views, 4);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_error() {
        assert!(matches!(RunConfig::parse("colour = red\n"), Err(Error::Config(_))));
        assert!(RunConfig::default().with_overrides(&["bogus=1"]).is_err());
        assert!(RunConfig::default().with_overrides(&["lambda"]).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::parse("lambda = -1").is_err());
        assert!(RunConfig::parse("point_size = 0").is_err());
        assert!(RunConfig::parse("prior_mode = external").is_err());
        assert!(RunConfig::parse("time_embed_dim = 3").is_err());
        assert!(RunConfig::parse("T = abc").is_err());
    }

    #[test]
    fn eps_defaults_to_softness() {
        let cfg = RunConfig::parse("softness = 0.2").unwrap();
        assert_eq!(cfg.condition_spec().unwrap().visibility_epsilon, 0.2);
    }
}
