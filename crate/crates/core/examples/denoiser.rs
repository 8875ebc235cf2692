//! One forward and backward pass of the noise-prediction network, plus a
//! checkpoint round trip and a check that predictions follow point order.

use cdm::denoiser::{denoise_backward, denoise_forward, init_params, DenoiserDims};
use cdm::diffusion::{checkpoint, make_schedule};
use cdm::geometry::Features;
use cdm::{rng, PointCloud};
use nalgebra::Vector3;

fn main() -> cdm::Result<()> {
    let dims = DenoiserDims {
        cond_dim: 2,
        hidden_dim: 16,
        time_embed_dim: 8,
    };
    let mut params = init_params(0, dims)?;
    for l in params.layout() {
        println!("{:9} {:3} x {:3} at offset {}", l.name, l.out_dim, l.in_dim, l.offset);
    }
    // Give the zero-initialized output layer some weight so outputs differ.
    let head = params.layer("head2").expect("head2").range();
    let mut r = rng::stream(1, 0);
    for v in &mut params.values_mut()[head] {
        *v = 0.1 * rng::standard_normal(&mut r);
    }

    let n = 8;
    let cloud = PointCloud::new(rng::normal_rows(&mut r, n))?
        .with_features(Features::from_rows(2, (0..2 * n).map(|i| i as f64 / 16.0).collect())?)?;
    let (eps, cache) = denoise_forward(&params, &cloud, 10, 100)?;
    println!("eps_hat[0] = {:?}", eps[0].as_slice());

    let upstream = vec![Vector3::new(1.0, 0.0, 0.0); n];
    let grad = denoise_backward(&params, &cache, &upstream)?;
    let norm = grad.params.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("|d(sum eps_x)/d(params)| = {norm:.6}");

    let perm: Vec<usize> = (0..n).rev().collect();
    let (eps_p, _) = denoise_forward(&params, &cloud.permuted(&perm), 10, 100)?;
    let max_diff = perm
        .iter()
        .enumerate()
        .map(|(k, &i)| (eps_p[k] - eps[i]).amax())
        .fold(0.0, f64::max);
    println!("permutation mismatch {max_diff:e}");

    let dir = std::env::temp_dir().join("cdm_denoiser_example.ckpt");
    checkpoint::save(&dir, &make_schedule(100, 1e-4, 0.02)?, &params)?;
    let (_, loaded) = checkpoint::load(&dir)?;
    let drift = loaded
        .values()
        .iter()
        .zip(params.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("checkpoint round trip: max f32 rounding {drift:e}");
    Ok(())
}
