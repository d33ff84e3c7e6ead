//! Pick the best thresholds for both rules on a random sample and confirm the
//! prefix-sum scan agrees with exhaustive search.
//!
//! cargo run --release --example optimize_thresholds

use rand::Rng;

use stewardsim::optimizer::{brute_force_oracle, optimize, optimize_with_slack, CandidateGrid, OptimizerOptions, Rule};
use stewardsim::policy::PolicyRecord;

fn main() -> stewardsim::Result<()> {
    let mut rng = stewardsim::seed::rng(11, &[]);
    let records: Vec<PolicyRecord> = (0..150)
        .map(|_| {
            let m = (rng.random::<f64>() * 40.0).round() / 40.0;
            let y = rng.random::<f64>() < m;
            let rho_j = rng.random::<f64>() < if y { 0.55 } else { 0.3 };
            PolicyRecord::new(m, rho_j, y)
        })
        .collect();
    let grid = CandidateGrid::from_records(&records)?;
    println!("{} records, {} candidate thresholds", records.len(), grid.len());

    let options = OptimizerOptions::default();
    for rule in Rule::ALL {
        let fast = optimize(&records, rule, &options)?;
        let slow = brute_force_oracle(&records, rule)?;
        println!(
            "{:<9} k=({:.4}, {:.4})  objective {:+}  constraint {:+}  oracle objective {:+}",
            rule.name(),
            fast.params.k_l,
            fast.params.k_h,
            fast.objective_value,
            fast.constraint_value,
            slow.objective_value
        );
        assert_eq!(fast.objective_value, slow.objective_value);
        match optimize_with_slack(&records, rule, 3, &options)? {
            Some(r) => println!("          with slack 3: objective {:+}  constraint {:+}", r.objective_value, r.constraint_value),
            None => println!("          no thresholds keep a slack of 3"),
        }
    }
    Ok(())
}
