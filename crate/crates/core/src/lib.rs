//! Conditional point-cloud diffusion with a multi-view depth consistency
//! penalty.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: point clouds, cameras, rigid transforms, orbit sampling.
//! - [`rasterizer`]: soft depth splatting with analytic position gradients.
//! - [`conditioning`]: pixel-to-point feature projection and 2D prior stacking.
//! - [`denoiser`]: a small per-point MLP with a max-pooled global branch.
//! - [`diffusion`]: noise schedule, forward process, the training objective,
//!   ancestral sampler and ELBO diagnostics.
//! - [`metrics`]: Chamfer distance, F-score and cross-seed consistency.
//! - [`data`]: synthetic shapes, dataset assembly and run configuration.
//! - [`pipeline`]: training, sampling and evaluation drivers used by the
//!   `cdm` binary and the examples.

pub mod conditioning;
pub mod data;
pub mod denoiser;
pub mod diffusion;
mod error;
pub mod geometry;
pub mod gradcheck;
pub mod metrics;
pub mod pipeline;
pub mod rasterizer;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{Camera, Features, PointCloud, ViewpointSet};
