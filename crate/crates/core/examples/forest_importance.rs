//! Fit the risk forest on the first two years of a cohort, score the third
//! year and rank covariates by permutation importance.
//!
//! cargo run --release --example forest_importance

use stewardsim::cohort::{generate, CohortConfig};
use stewardsim::forest::{permutation_importance, Dataset, ForestParams, RiskModel};
use stewardsim::metrics::roc_auc;

fn main() -> stewardsim::Result<()> {
    let cohort = generate(&CohortConfig::default(), 7)?;
    let split = cohort.lower_bound(720);
    let cs = &cohort.consultations;
    let train = Dataset::from_consultations(&cs[..split])?;
    let test = Dataset::from_consultations(&cs[split..])?;

    let model = RiskModel::fit(&train, &ForestParams::default().with_seed(7))?;
    let scores = model.predict_dataset(&test)?;
    let outcomes: Vec<bool> = cs[split..].iter().map(|c| c.y).collect();
    println!("{} training rows, {} test rows", train.n_rows(), test.n_rows());
    println!("out-of-sample AUC {:.4}", roc_auc(&scores, &outcomes)?.auc.unwrap_or(f64::NAN));

    let importance = permutation_importance(&model, &test, 3, 7)?;
    let mut ranked: Vec<(usize, f64)> = importance.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("top features by MSE increase:");
    for (j, v) in ranked.iter().take(8) {
        println!("  x{j:<3} {v:.5}");
    }
    let noise = &cohort.meta.noise_features;
    let worst = noise.iter().map(|&j| importance[j].abs()).fold(0.0, f64::max);
    println!("largest |importance| among {} noise features: {worst:.5}", noise.len());
    Ok(())
}
