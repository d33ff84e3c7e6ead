//! Regress clinic mean deviation on clinic characteristics with
//! heteroskedasticity-robust (HC1) standard errors.
//!
//! cargo run --release --example clinic_regression

use stewardsim::cohort::{generate, Clinic, CohortConfig};
use stewardsim::forest::ForestParams;
use stewardsim::metrics::{mean_deviation, ols_robust, ScoredRecord};
use stewardsim::rolling::{Backtest, Schedule};

fn main() -> stewardsim::Result<()> {
    let cohort = generate(&CohortConfig::default(), 7)?;
    let schedule = Schedule { seed: 7, ..Schedule::default() };
    let forest = ForestParams { n_trees: 60, ..ForestParams::default() }.with_seed(7);
    let bt = Backtest::prepare(&cohort, &schedule, &forest, false)?;
    let cs = &cohort.consultations;
    let scored: Vec<ScoredRecord<'_>> = bt
        .pooled_scores()?
        .into_iter()
        .map(|(i, m)| ScoredRecord { clinic_id: &cs[i].clinic_id, m, y: cs[i].y, rho_j: cs[i].rho_j })
        .collect();

    let (mut rows, mut response) = (Vec::new(), Vec::new());
    for (id, dc) in mean_deviation(&scored) {
        if let (Some(dc), Some(clinic)) = (dc, cohort.clinics.get(&id)) {
            let mut row = vec![1.0];
            row.extend(clinic.characteristics());
            rows.push(row);
            response.push(dc);
        }
    }
    let mut names = vec!["intercept"];
    names.extend(Clinic::CHARACTERISTICS);
    let fit = ols_robust(&rows, &response, &names)?;
    println!("{} clinics", fit.n);
    println!("{:<24} {:>9} {:>9} {:>20}", "term", "coef", "se", "95% CI");
    for j in 0..fit.names.len() {
        println!(
            "{:<24} {:>9.4} {:>9.4} [{:>8.4}, {:>8.4}]",
            fit.names[j], fit.coef[j], fit.se[j], fit.ci_lo[j], fit.ci_hi[j]
        );
    }
    Ok(())
}
