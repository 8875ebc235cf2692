//! Denoising diffusion over point positions.

pub mod checkpoint;
mod elbo;
mod loss;
mod sampler;
mod schedule;

pub use elbo::{
    elbo_inputs_for_model, elbo_report, gaussian_kl, gaussian_nll, ElboInputs, ElboReport, GaussianPair,
};
pub use loss::{cdm_loss, cdm_loss_grad, pc2_loss, LossBreakdown, LossInputs};
pub use sampler::reverse_sample;
pub use schedule::{forward_sample, make_schedule, predict_x0, NoiseSchedule};
