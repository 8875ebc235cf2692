//! Desk-scale training trend: trains with and without the multi-view depth
//! penalty on the same data and seeds and compares reconstruction quality
//! and sampling consistency.
//!
//! `cargo run --release --example training_trend -- [key=value ...]`

use std::time::Instant;

use cdm::data::{generate_dataset, split};
use cdm::pipeline::{train_and_score, trend_config, untrained_cd};

fn main() -> cdm::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let run = trend_config().with_overrides(&overrides)?;
    run.validate()?;
    let items = generate_dataset(&run)?;
    let (train, test) = split(&items, run.train_fraction, run.seed)?;
    let cond_dim = items[0].conditioning_image.channels();
    println!("train {} / test {} items", train.len(), test.len());

    let base = untrained_cd(&run, cond_dim, &test)?;
    println!("untrained mean CD {base:.3}");
    for lambda in [run.lambda, 0.0] {
        let start = Instant::now();
        let cell = run.clone().with_overrides(&[format!("lambda={lambda}")])?;
        let m = train_and_score(&cell, &train, &test, 8)?;
        let last = m.log.last().expect("at least one log row");
        println!(
            "lambda={lambda}: final loss {:.4} (diffusion {:.4}, prior {:.4}); mean CD {:.3} ({:.1}% of untrained); \
             8-seed CD mean {:.3} std {:.3}; {:.0?}",
            last.loss.total,
            last.loss.diffusion_loss,
            last.loss.prior_constraint,
            m.mean_cd,
            100.0 * m.mean_cd / base,
            m.consistency_mean,
            m.consistency_std,
            start.elapsed()
        );
    }
    Ok(())
}
