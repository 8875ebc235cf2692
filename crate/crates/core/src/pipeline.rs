//! End-to-end workflows on top of the library: training, sampling,
//! evaluation and the diagnostic renders.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng as _;
use rayon::prelude::*;

use crate::conditioning::project_features;
use crate::data::{DatasetItem, RunConfig};
use crate::denoiser::{init_params, DenoiserDims, DenoiserParams};
use crate::diffusion::{cdm_loss_grad, reverse_sample, LossBreakdown, LossInputs, NoiseSchedule};
use crate::metrics::{fscore, seed_consistency, MetricReport, DEFAULT_TAU};
use crate::rasterizer::rast::Raster;
use crate::rasterizer::{render_depth, DepthImage};
use crate::rng::{self, streams};
use crate::{Error, Features, PointCloud, Result};

/// Runs `f` on a pool capped at `CDM_THREADS` workers when that variable is
/// set, and on the global pool otherwise.
pub fn with_thread_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    match std::env::var("CDM_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("CDM_THREADS must be a positive integer, got '{v}'")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

pub fn denoiser_dims(run: &RunConfig, cond_dim: usize) -> DenoiserDims {
    DenoiserDims {
        cond_dim,
        hidden_dim: run.hidden_dim,
        time_embed_dim: run.time_embed_dim,
    }
}

/// Condition features of `x` seen from the item's conditioning camera.
pub fn condition_features(item: &DatasetItem, run: &RunConfig, x: &PointCloud) -> Result<Features> {
    let spec = run.condition_spec()?;
    let proj = project_features(
        x,
        item.conditioning_view(),
        &item.conditioning_image,
        &run.splat_config(),
        spec.visibility_epsilon,
    )?;
    Ok(proj.cloud.features().cloned().expect("projection attaches features"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub step: usize,
    pub loss: LossBreakdown,
}

pub const TRAIN_LOG_HEADER: &str = "step,diffusion_loss,prior_constraint,total";

impl TrainLogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{}",
            self.step, self.loss.diffusion_loss, self.loss.prior_constraint, self.loss.total
        )
    }
}

fn check_items(items: &[DatasetItem]) -> Result<usize> {
    let first = items.first().ok_or_else(|| Error::invalid("no training items"))?;
    let c = first.conditioning_image.channels();
    if items.iter().any(|i| i.conditioning_image.channels() != c) {
        return Err(Error::shape("items disagree on condition channel count"));
    }
    Ok(c)
}

/// Plain SGD on the CDM loss. Each step draws `batch_size` items with
/// replacement, one uniform timestep and fresh noise per item; per-item
/// gradients run in parallel and are summed in batch order. `log` receives
/// the batch-mean loss every `log_every` steps and at the last step.
pub fn train(
    run: &RunConfig,
    items: &[DatasetItem],
    init: Option<DenoiserParams>,
    log: &mut dyn FnMut(&TrainLogRow) -> Result<()>,
) -> Result<DenoiserParams> {
    run.validate()?;
    let cond_dim = check_items(items)?;
    let dims = denoiser_dims(run, cond_dim);
    let mut params = match init {
        Some(p) if p.dims() == dims => p,
        Some(_) => return Err(Error::shape("initial parameters do not match the run dimensions")),
        None => init_params(run.seed, dims)?,
    };
    let sched = run.schedule()?;
    let cfg = run.splat_config();
    let targets: Vec<Vec<DepthImage>> = items
        .par_iter()
        .map(|item| {
            item.prior_views
                .cameras()
                .iter()
                .map(|cam| render_depth(&item.ground_truth, cam, &cfg))
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rng = rng::stream(run.seed, streams::TRAIN);
    for step in 1..=run.train_steps {
        let draws: Vec<(usize, usize, Vec<Vector3<f64>>)> = (0..run.batch_size)
            .map(|_| {
                let i = rng.random_range(0..items.len());
                let t = rng.random_range(1..=sched.steps());
                (i, t, rng::normal_rows(&mut rng, items[i].ground_truth.len()))
            })
            .collect();
        let results: Vec<(LossBreakdown, Vec<f64>)> = draws
            .par_iter()
            .map(|(i, t, noise)| {
                let item = &items[*i];
                let x_t = crate::diffusion::forward_sample(&sched, &item.ground_truth, *t, noise)?;
                let cond = condition_features(item, run, &x_t)?;
                let inputs = LossInputs {
                    x0: &item.ground_truth,
                    t: *t,
                    noise,
                    cond: &cond,
                    views: &item.prior_views,
                    cfg: &cfg,
                    lambda: run.lambda,
                    targets: Some(&targets[*i]),
                };
                cdm_loss_grad(&sched, &params, &inputs)
            })
            .collect::<Result<_>>()?;

        let b = results.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let (mut diff, mut prior) = (0.0, 0.0);
        for (loss, g) in &results {
            diff += loss.diffusion_loss / b;
            prior += loss.prior_constraint / b;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v / b;
            }
        }
        if !diff.is_finite() || !prior.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite loss or gradient at step {step}")));
        }
        params.sgd_step(&grad, run.learning_rate);
        if step % run.log_every == 0 || step == run.train_steps {
            let loss = LossBreakdown {
                diffusion_loss: diff,
                prior_constraint: prior,
                lambda: run.lambda,
                total: diff + run.lambda * prior,
            };
            log(&TrainLogRow { step, loss })?;
        }
    }
    Ok(params)
}

/// Seed for sampling `item_index` with sampling seed `seed`.
pub fn sample_seed(item_index: usize, seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ item_index as u64
}

/// Reconstruction of one item, conditioned on its image at every step.
pub fn sample_item(
    sched: &NoiseSchedule,
    params: &DenoiserParams,
    item: &DatasetItem,
    run: &RunConfig,
    seed: u64,
) -> Result<PointCloud> {
    let mut condition = |x: &PointCloud| condition_features(item, run, x);
    reverse_sample(sched, params, &mut condition, item.ground_truth.len(), seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub shape_id: String,
    pub seed: u64,
    pub report: MetricReport,
}

/// Samples every item for every seed in `0..seeds` (in parallel) and scores
/// each sample against its ground truth in the normalized frame.
pub fn evaluate(
    sched: &NoiseSchedule,
    params: &DenoiserParams,
    items: &[DatasetItem],
    run: &RunConfig,
    seeds: usize,
) -> Result<Vec<EvalRow>> {
    let jobs: Vec<(usize, u64)> = (0..items.len())
        .flat_map(|i| (0..seeds as u64).map(move |s| (i, s)))
        .collect();
    jobs.par_iter()
        .map(|&(i, s)| {
            let item = &items[i];
            let sample = sample_item(sched, params, item, run, sample_seed(i, s))?;
            Ok(EvalRow {
                shape_id: item.id.clone(),
                seed: s,
                report: fscore(&sample, &item.ground_truth, DEFAULT_TAU)?,
            })
        })
        .collect()
}

pub fn mean_cd(rows: &[EvalRow]) -> f64 {
    rows.iter().map(|r| r.report.cd).sum::<f64>() / rows.len().max(1) as f64
}

pub fn mean_f1(rows: &[EvalRow]) -> f64 {
    rows.iter().map(|r| r.report.f1).sum::<f64>() / rows.len().max(1) as f64
}

/// One row per sample, ordered by item then seed.
pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from("shape_id,cd,f1,precision,recall\n");
    for r in rows {
        let m = &r.report;
        let _ = writeln!(s, "{},{},{},{},{}", r.shape_id, m.cd, m.f1, m.precision, m.recall);
    }
    s
}

pub fn eval_summary(rows: &[EvalRow]) -> String {
    format!("mean_cd={} mean_f1={} n={}", mean_cd(rows), mean_f1(rows), rows.len())
}

/// Mean over items of the per-item `(mean, std)` chamfer across sampling
/// seeds `0..seeds`.
pub fn consistency(
    sched: &NoiseSchedule,
    params: &DenoiserParams,
    items: &[DatasetItem],
    run: &RunConfig,
    seeds: usize,
) -> Result<(f64, f64)> {
    let per_item: Vec<(f64, f64)> = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let mut sampler = |s: u64| sample_item(sched, params, item, run, sample_seed(i, s));
            seed_consistency(&mut sampler, seeds, &item.ground_truth)
        })
        .collect::<Result<_>>()?;
    let n = per_item.len().max(1) as f64;
    Ok((
        per_item.iter().map(|p| p.0).sum::<f64>() / n,
        per_item.iter().map(|p| p.1).sum::<f64>() / n,
    ))
}

/// Desk-scale experiment settings: 64 shapes of 512 points, `T = 100`,
/// 32×32 rasters, four prior views, 5000 SGD steps.
pub fn trend_config() -> RunConfig {
    RunConfig {
        n_items: 64,
        n_points: 512,
        steps_t: 100,
        image_size: 32,
        views: 4,
        train_steps: 5000,
        hidden_dim: 32,
        learning_rate: 0.1,
        batch_size: 8,
        log_every: 250,
        ..RunConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredModel {
    pub params: DenoiserParams,
    pub log: Vec<TrainLogRow>,
    /// Mean chamfer of the test items at sampling seed 0.
    pub mean_cd: f64,
    pub consistency_mean: f64,
    pub consistency_std: f64,
}

/// Trains on `train_items` and scores the model on `test_items`.
pub fn train_and_score(
    run: &RunConfig,
    train_items: &[DatasetItem],
    test_items: &[DatasetItem],
    seeds: usize,
) -> Result<ScoredModel> {
    let mut log = Vec::new();
    let params = train(run, train_items, None, &mut |r| {
        log.push(*r);
        Ok(())
    })?;
    let sched = run.schedule()?;
    let mean_cd = mean_cd(&evaluate(&sched, &params, test_items, run, 1)?);
    let (consistency_mean, consistency_std) = consistency(&sched, &params, test_items, run, seeds)?;
    Ok(ScoredModel {
        params,
        log,
        mean_cd,
        consistency_mean,
        consistency_std,
    })
}

/// Mean chamfer of untrained samples, the reference for training progress.
pub fn untrained_cd(run: &RunConfig, cond_dim: usize, test_items: &[DatasetItem]) -> Result<f64> {
    let params = init_params(run.seed, denoiser_dims(run, cond_dim))?;
    let rows = evaluate(&run.schedule()?, &params, test_items, run, 1)?;
    Ok(mean_cd(&rows))
}

/// Depth renders of the item's ground truth from each prior view.
pub fn render_priors(item: &DatasetItem, run: &RunConfig) -> Result<Vec<DepthImage>> {
    let cfg = run.splat_config();
    item.prior_views
        .cameras()
        .iter()
        .map(|cam| render_depth(&item.ground_truth, cam, &cfg))
        .collect()
}

/// Writes `view_<k>_depth.rast` and `view_<k>_mask.rast` (0/1) per view.
pub fn write_priors(dir: &Path, renders: &[DepthImage]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (k, r) in renders.iter().enumerate() {
        let mask: Vec<f64> = r.mask().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        Raster::from_f64(r.width(), r.height(), 1, r.depth())?.write(&dir.join(format!("view_{k}_depth.rast")))?;
        Raster::from_f64(r.width(), r.height(), 1, &mask)?.write(&dir.join(format!("view_{k}_mask.rast")))?;
    }
    Ok(())
}

/// Fraction of ground-truth points that receive image features.
pub fn visible_stats(items: &[DatasetItem], run: &RunConfig) -> Result<Vec<(String, f64)>> {
    let spec = run.condition_spec()?;
    let cfg = run.splat_config();
    items
        .iter()
        .map(|item| {
            let p = project_features(
                &item.ground_truth,
                item.conditioning_view(),
                &item.conditioning_image,
                &cfg,
                spec.visibility_epsilon,
            )?;
            Ok((item.id.clone(), p.visible_fraction))
        })
        .collect()
}
