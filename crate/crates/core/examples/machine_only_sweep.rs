//! Sweep the machine-only rule over k and look for a threshold that cuts
//! prescriptions while treating more bacterial infections.
//!
//! cargo run --release --example machine_only_sweep

use stewardsim::cohort::{generate, CohortConfig};
use stewardsim::forest::ForestParams;
use stewardsim::rolling::{default_k_grid, machine_only_sweep, Backtest, Schedule};

fn main() -> stewardsim::Result<()> {
    let cohort = generate(&CohortConfig::default(), 7)?;
    let schedule = Schedule { n_windows: Some(8), bootstrap: 50, seed: 7, ..Schedule::default() };
    let forest = ForestParams { n_trees: 100, ..ForestParams::default() }.with_seed(7);
    let bt = Backtest::prepare(&cohort, &schedule, &forest, false)?;
    let curve = machine_only_sweep(&bt, &default_k_grid(20))?;
    println!("    k     d_rho %   d_buti %");
    let mut dominating = Vec::new();
    for p in &curve {
        let (r, b) = (p.mean_pct_delta_rho.unwrap_or(f64::NAN), p.mean_pct_delta_buti.unwrap_or(f64::NAN));
        println!("{:6.3}  {r:+9.2}  {b:+9.2}", p.k);
        if r < 0.0 && b > 0.0 {
            dominating.push(p.k);
        }
    }
    println!("thresholds that lower use and raise treated positives: {dominating:?}");
    Ok(())
}
