//! Finite-difference check of the loss and render gradients.
//!
//! `cargo run --release --example gradcheck -- [instances]`

use cdm::gradcheck::{run_gradcheck, GradcheckConfig};

fn main() -> cdm::Result<()> {
    let instances = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let gc = GradcheckConfig {
        instances,
        ..GradcheckConfig::default()
    };
    let r = run_gradcheck(&gc)?;
    println!("components checked {}, skipped at coverage changes {}", r.checked, r.skipped);
    println!("max relative error: loss {:e}, render {:e}", r.loss_max_rel, r.render_max_rel);
    Ok(())
}
