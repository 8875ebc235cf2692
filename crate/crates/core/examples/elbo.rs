//! Per-term variational bound of an untrained model on one dataset item.

use cdm::data::{generate_dataset, RunConfig};
use cdm::diffusion::{elbo_inputs_for_model, elbo_report, gaussian_kl};
use cdm::pipeline::{condition_features, denoiser_dims};

fn main() -> cdm::Result<()> {
    println!("KL(N(0,1) || N(1,1)) = {}", gaussian_kl(&[0.0], 1.0, &[1.0], 1.0)?);

    let run = RunConfig::default().with_overrides(&[
        "n_items=1",
        "n_points=128",
        "image_size=24",
        "H=3",
        "T=50",
        "hidden_dim=16",
        "time_embed_dim=8",
    ])?;
    let item = &generate_dataset(&run)?[0];
    let params = cdm::denoiser::init_params(0, denoiser_dims(&run, 1))?;
    let mut condition = |x: &cdm::PointCloud| condition_features(item, &run, x);
    let inputs = elbo_inputs_for_model(
        &run.schedule()?,
        &params,
        &item.ground_truth,
        &mut condition,
        &item.prior_views,
        &run.splat_config(),
        0,
    )?;
    let report = elbo_report(&inputs, run.lambda)?;
    println!("L_T = {:.4}, L_0 = {:.4}", report.l_t, report.l_0);
    for t in [2usize, 10, 25, 50] {
        println!(
            "t = {t:2}: L_(t-1) = {:.4}, prior term = {:.6}",
            report.l_t_minus_1[t - 2],
            report.prior_terms[t - 1]
        );
    }
    println!("total = {:.4}", report.total());
    Ok(())
}
