//! Deterministic random streams.
//!
//! Every consumer derives its generator from the run seed plus a fixed
//! stream index, so adding a consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

/// Fixed sub-stream indices.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const SAMPLE: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const GRADCHECK: u64 = 6;
}

pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` rows of independent standard normal triples.
pub fn normal_rows(rng: &mut Rng, n: usize) -> Vec<nalgebra::Vector3<f64>> {
    (0..n)
        .map(|_| {
            nalgebra::Vector3::new(
                standard_normal(rng),
                standard_normal(rng),
                standard_normal(rng),
            )
        })
        .collect()
}
