//! Statistical and structural properties of the risk forest on generated cohorts.

use proptest::prelude::*;
use rand::Rng;

use stewardsim::cohort::{generate, CohortConfig};
use stewardsim::forest::{permutation_importance, Dataset, ForestParams, RiskModel};

fn mse(model: &RiskModel, data: &Dataset) -> f64 {
    let p = model.predict_dataset(data).unwrap();
    p.iter().zip(data.y()).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / p.len() as f64
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a))).unwrap()
}

#[test]
fn desk_model_probes_and_noise_importance() {
    let config = CohortConfig::default();
    let cohort = generate(&config, 7).unwrap();
    let cs = &cohort.consultations;
    let train = Dataset::from_consultations(&cs[..12_000]).unwrap();
    let holdout = Dataset::from_consultations(&cs[12_000..15_000]).unwrap();
    let model = RiskModel::fit(&train, &ForestParams::default().with_seed(7)).unwrap();

    let (lo, hi) = model.leaf_range();
    let mut rng = stewardsim::seed::rng(99, &[]);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..config.n_features).map(|_| rng.random_range(-4.0..4.0)).collect();
        let p = model.predict(&x).unwrap();
        assert!((0.0..=1.0).contains(&p), "prediction {p} out of range");
        assert!(lo <= p && p <= hi, "prediction {p} outside leaf range [{lo}, {hi}]");
    }

    let importance = permutation_importance(&model, &holdout, 10, 7).unwrap();
    assert_eq!(cohort.meta.noise_features.len(), config.n_noise_features);
    for &j in &cohort.meta.noise_features {
        assert!(importance[j].abs() < 0.002, "noise feature {j} importance {}", importance[j]);
    }
    assert!(importance[0] > 0.002);
}

#[test]
fn strongest_generative_feature_ranks_first() {
    let config = CohortConfig { n_consultations: 8_000, ..CohortConfig::default() };
    let params = ForestParams { n_trees: 100, ..ForestParams::default() };
    let mut hits = 0;
    for seed in 1..=5u64 {
        let cohort = generate(&config, seed).unwrap();
        let cs = &cohort.consultations;
        let train = Dataset::from_consultations(&cs[..6_000]).unwrap();
        let holdout = Dataset::from_consultations(&cs[6_000..]).unwrap();
        let model = RiskModel::fit(&train, &params.with_seed(seed)).unwrap();
        let importance = permutation_importance(&model, &holdout, 3, seed).unwrap();
        let strongest = cohort.meta.strongest_feature.expect("generator knows its strongest feature");
        if argmax(&importance) == strongest {
            hits += 1;
        }
    }
    assert!(hits >= 4, "strongest feature ranked first in {hits}/5 seeds");
}

#[test]
fn doubling_training_data_does_not_hurt() {
    let config = CohortConfig { n_consultations: 10_000, ..CohortConfig::default() };
    let params = ForestParams { n_trees: 60, ..ForestParams::default() };
    let (mut small, mut large) = (0.0, 0.0);
    for seed in 1..=5u64 {
        let cohort = generate(&config, seed).unwrap();
        let cs = &cohort.consultations;
        let probe = Dataset::from_consultations(&cs[6_000..]).unwrap();
        let half = RiskModel::fit(&Dataset::from_consultations(&cs[..3_000]).unwrap(), &params.with_seed(seed)).unwrap();
        let full = RiskModel::fit(&Dataset::from_consultations(&cs[..6_000]).unwrap(), &params.with_seed(seed)).unwrap();
        small += mse(&half, &probe) / 5.0;
        large += mse(&full, &probe) / 5.0;
    }
    assert!(large <= 1.10 * small, "MSE {small:.5} -> {large:.5} after doubling");
}

fn dataset_strategy() -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 3), prop::bool::ANY), 5..80)
        .prop_map(|rows| rows.into_iter().map(|(x, y)| (x, y as u8 as f64)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn predictions_lie_within_leaf_values(rows in dataset_strategy(), seed in 0u64..1000,
                                          probe in prop::collection::vec(-4.0f64..4.0, 3)) {
        let data = Dataset::from_rows(&rows).unwrap();
        let params = ForestParams { n_trees: 7, max_depth: 5, min_leaf: 2, mtry: None, seed };
        let model = RiskModel::fit(&data, &params).unwrap();
        let (lo, hi) = model.leaf_range();
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        let p = model.predict(&probe).unwrap();
        prop_assert!(lo <= p && p <= hi);
        for tree in &model.trees {
            for v in tree.leaf_values() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
