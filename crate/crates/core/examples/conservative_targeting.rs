//! Conservative targeting: give up part of the in-sample potential in exchange
//! for constraint slack, then check how the chosen thresholds do on the next
//! month of the same cohort.
//!
//! cargo run --release --example conservative_targeting

use stewardsim::cohort::{generate, CohortConfig};
use stewardsim::optimizer::{conservative_params, OptimizerOptions, Rule};
use stewardsim::forest::ForestParams;
use stewardsim::policy::evaluate;
use stewardsim::rolling::{Backtest, Schedule};

fn main() -> stewardsim::Result<()> {
    let cohort = generate(&CohortConfig::default(), 3)?;
    let schedule = Schedule { n_windows: Some(2), seed: 3, ..Schedule::default() };
    let forest = ForestParams { n_trees: 100, ..ForestParams::default() }.with_seed(3);
    let bt = Backtest::prepare(&cohort, &schedule, &forest, false)?;
    let fit = bt.window_records(&bt.windows[0])?;
    let next = bt.window_records(&bt.windows[1])?;
    for rule in Rule::ALL {
        println!("{} rule", rule.name());
        for alpha in [1.0, 0.9, 0.8, 0.6] {
            let c = conservative_params(&fit, alpha, rule, &OptimizerOptions::default())?;
            let p = c.params();
            let later = evaluate(&next, p)?;
            println!(
                "  alpha {alpha:.1}: slack {:>3}  in-sample objective {:+} of {:+}  next month objective {:+} constraint {:+}",
                c.slack,
                c.result.objective_value,
                c.expost.objective_value,
                rule.objective(&later),
                rule.constraint(&later)
            );
        }
    }
    Ok(())
}
