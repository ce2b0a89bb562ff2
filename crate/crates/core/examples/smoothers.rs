//! Kernel density, smoothed CDF and Nadaraya-Watson regression on
//! simulated data.

use nnimpute::{kernel_density, kernel_regression, smoothed_cdf, KernelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> nnimpute::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ys: Vec<(f64, f64)> = (0..2_000).map(|_| (rng.sample(StandardNormal), 1.0)).collect();
    for h in [0.1, 0.2, KernelConfig::rule_of_thumb(ys.len(), 1.5)?.bandwidth()] {
        let cfg = KernelConfig::new(h)?;
        println!(
            "h = {h:.3}: f(0) = {:.4}  F(0) = {:.4}  F(1.645) = {:.4}",
            kernel_density(&ys, cfg, 0.0)?,
            smoothed_cdf(&ys, cfg, 0.0)?,
            smoothed_cdf(&ys, cfg, 1.645)?
        );
    }

    let pts: Vec<(f64, f64, f64)> = (0..300)
        .map(|_| {
            let x: f64 = rng.random_range(-2.0..2.0);
            (x, x * x + 0.3 * rng.sample::<f64, _>(StandardNormal), 1.0)
        })
        .collect();
    let curve = kernel_regression(&pts, KernelConfig::new(0.25)?)?;
    for q in [-1.5, -0.5, 0.0, 0.5, 1.5] {
        println!("m({q:+.1}) = {:.3}  (x^2 = {:.3})", curve.evaluate(q).value, q * q);
    }
    Ok(())
}
