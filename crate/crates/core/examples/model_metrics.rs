//! Risk-model diagnostics on pooled out-of-sample scores: ROC curve, binned
//! calibration and clinic-level mean deviation.
//!
//! cargo run --release --example model_metrics

use stewardsim::cohort::{generate, CohortConfig};
use stewardsim::forest::ForestParams;
use stewardsim::metrics::{calibration_bins, histogram, mean_deviation, roc_auc, ScoredRecord};
use stewardsim::rolling::{Backtest, Schedule};

fn main() -> stewardsim::Result<()> {
    let cohort = generate(&CohortConfig::default(), 7)?;
    let schedule = Schedule { n_windows: Some(6), seed: 7, ..Schedule::default() };
    let forest = ForestParams { n_trees: 100, ..ForestParams::default() }.with_seed(7);
    let bt = Backtest::prepare(&cohort, &schedule, &forest, false)?;
    let pooled = bt.pooled_scores()?;
    let cs = &cohort.consultations;

    let scores: Vec<f64> = pooled.iter().map(|p| p.1).collect();
    let outcomes: Vec<bool> = pooled.iter().map(|p| cs[p.0].y).collect();
    let ids: Vec<&str> = pooled.iter().map(|p| cs[p.0].patient_id.as_str()).collect();

    let roc = roc_auc(&scores, &outcomes)?;
    println!("{} scored consultations, AUC {:.4}", scores.len(), roc.auc.unwrap_or(f64::NAN));
    println!("ROC has {} points; trapezoid area {:.4}", roc.points.len(), roc.trapezoid_area());

    println!("calibration (highest-risk bins first):");
    for b in calibration_bins(&scores, &outcomes, &ids, 500)?.iter().take(5) {
        println!("  mean risk {:.3}  observed rate {:.3}  n {}", b.mean_predicted_risk, b.mean_outcome, b.bin_size);
    }

    let scored: Vec<ScoredRecord<'_>> = pooled
        .iter()
        .map(|&(i, m)| ScoredRecord { clinic_id: &cs[i].clinic_id, m, y: cs[i].y, rho_j: cs[i].rho_j })
        .collect();
    let dev: Vec<f64> = mean_deviation(&scored).into_values().flatten().collect();
    println!(
        "mean deviation over {} clinics: {:.3}",
        dev.len(),
        dev.iter().sum::<f64>() / dev.len() as f64
    );
    for bin in histogram(&dev, 8)? {
        println!("  [{:+.2}, {:+.2})  {}", bin.lo, bin.hi, "#".repeat(bin.count));
    }
    Ok(())
}
