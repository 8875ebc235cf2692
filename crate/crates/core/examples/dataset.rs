//! Generates a small synthetic dataset, writes it to disk, reads it back and
//! splits it.
//!
//! `cargo run --example dataset -- [dir]`

use cdm::data::{generate_dataset, read_dataset, split, write_dataset, RunConfig};

fn main() -> cdm::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("cdm_dataset_example"));
    let run = RunConfig::default().with_overrides(&[
        "n_items=8",
        "n_points=256",
        "image_size=32",
        "H=4",
        "prior_mode=contour",
    ])?;
    let items = generate_dataset(&run)?;
    write_dataset(&dir, &items)?;
    let loaded = read_dataset(&dir)?;
    assert_eq!(loaded, items);
    for item in &loaded {
        println!(
            "{} {:32} {} points, channels {:?}, {} views",
            item.id,
            item.shape.to_string(),
            item.ground_truth.len(),
            item.conditioning_image.tags(),
            item.prior_views.len()
        );
    }
    let (train, test) = split(&loaded, run.train_fraction, run.seed)?;
    println!("split: {} train, {} test; written to {}", train.len(), test.len(), dir.display());
    Ok(())
}
