//! Percentile bootstrap intervals for a fixed rule, showing the roughly
//! 1/sqrt(n) shrinkage of interval width.
//!
//! cargo run --release --example bootstrap_intervals

use rand::Rng;

use stewardsim::policy::{evaluate, PolicyParams, PolicyRecord};
use stewardsim::rolling::bootstrap_ci;

fn sample(n: usize, seed: u64) -> Vec<PolicyRecord> {
    let mut rng = stewardsim::seed::rng(seed, &[]);
    (0..n)
        .map(|_| {
            let m: f64 = rng.random();
            let y = rng.random::<f64>() < m;
            let rho_j = rng.random::<f64>() < if y { 0.6 } else { 0.25 };
            PolicyRecord::new(m, rho_j, y)
        })
        .collect()
}

fn main() -> stewardsim::Result<()> {
    let params = PolicyParams::new(0.3, 0.7)?;
    for n in [250, 1_000, 4_000, 16_000] {
        let records = sample(n, 1);
        let point = evaluate(&records, params)?;
        let ci = bootstrap_ci(&records, params, 200, 9)?;
        let rho = ci.pct_delta_rho.expect("defined");
        let buti = ci.pct_delta_buti.expect("defined");
        println!(
            "n {n:>6}: rho {:+6.2}% [{:+6.2}, {:+6.2}] width {:5.2}   buti {:+6.2}% [{:+6.2}, {:+6.2}]",
            point.pct_delta_rho.unwrap_or(f64::NAN),
            rho.lo,
            rho.hi,
            rho.hi - rho.lo,
            point.pct_delta_buti.unwrap_or(f64::NAN),
            buti.lo,
            buti.hi
        );
    }
    Ok(())
}
