//! Noise schedule and forward process: marginal statistics of `x_t` and
//! exact recovery of `x_0` from the true noise.

use cdm::diffusion::{forward_sample, make_schedule, predict_x0};
use cdm::rng;
use cdm::PointCloud;

fn main() -> cdm::Result<()> {
    let sched = make_schedule(100, 1e-4, 0.02)?;
    let x0 = PointCloud::from_xyz(&[[0.5, -0.25, 1.0]])?;
    let draws = 10_000;
    let mut r = rng::stream(0, 0);
    println!("   t   alpha_bar   mean_x (expect)      var_x (expect)");
    for t in [1, 25, 50, 100] {
        let ab = sched.alpha_bar(t);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..draws {
            let x = forward_sample(&sched, &x0, t, &rng::normal_rows(&mut r, 1))?.positions()[0].x;
            sum += x;
            sq += x * x;
        }
        let mean = sum / draws as f64;
        let var = sq / draws as f64 - mean * mean;
        println!(
            "{t:4}   {ab:.6}   {mean:+.4} ({:+.4})   {var:.4} ({:.4})",
            ab.sqrt() * 0.5,
            1.0 - ab
        );
    }

    let noise = rng::normal_rows(&mut r, 1);
    let x_t = forward_sample(&sched, &x0, 60, &noise)?;
    let back = predict_x0(&sched, &x_t, &noise, 60)?;
    println!("x0 recovered from true noise: {:?}", back.positions()[0].as_slice());
    Ok(())
}
