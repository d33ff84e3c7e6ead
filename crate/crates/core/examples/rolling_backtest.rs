//! Rolling ex-post and ex-ante evaluation on a reduced cohort, printing the
//! per-window outcomes of the reduction rule.
//!
//! cargo run --release --example rolling_backtest

use stewardsim::cohort::{generate, CohortConfig};
use stewardsim::forest::ForestParams;
use stewardsim::optimizer::Rule;
use stewardsim::rolling::{run_exante, run_expost, Backtest, Schedule, Variant};

fn main() -> stewardsim::Result<()> {
    let config = CohortConfig { n_consultations: 8_000, horizon_days: 600, ..CohortConfig::default() };
    let cohort = generate(&config, 5)?;
    let schedule = Schedule { bootstrap: 50, seed: 5, ..Schedule::default() };
    let forest = ForestParams { n_trees: 60, ..ForestParams::default() }.with_seed(5);
    let bt = Backtest::prepare(&cohort, &schedule, &forest, true)?;
    println!("{} windows, {} ex-ante slices", bt.windows.len(), bt.exante_slices().len());

    for rule in Rule::ALL {
        let post = run_expost(&bt, rule, Variant::Standard)?;
        let ante = run_exante(&bt, rule, Variant::Standard)?;
        println!("\n{} rule: window, ex-post objective %, ex-ante objective % [95% CI]", rule.name());
        for w in &post.windows {
            let a = ante.windows.iter().find(|a| a.window_id == w.window_id);
            let fmt = |v: Option<f64>| v.map_or("   -  ".into(), |v| format!("{v:+6.2}"));
            let ci = a
                .and_then(|a| a.objective_ci)
                .map_or(String::new(), |c| format!("[{:+.2}, {:+.2}]", c.lo, c.hi));
            println!("  {:>2}  {}  {} {ci}", w.window_id, fmt(w.objective_pct), fmt(a.and_then(|a| a.objective_pct)));
        }
        println!(
            "  pooled: ex post {:+.2}%, ex ante {:+.2}% (constraint {:+.2}%)",
            post.aggregate.objective_pct.unwrap_or(f64::NAN),
            ante.aggregate.objective_pct.unwrap_or(f64::NAN),
            ante.aggregate.constraint_pct.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
