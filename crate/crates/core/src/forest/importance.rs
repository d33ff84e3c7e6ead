use rand::seq::SliceRandom;

use super::{Dataset, RiskModel};
use crate::error::{Error, Result};
use crate::seed::{self, stage};

/// Mean increase in squared error when one column is shuffled, per feature.
///
/// Only trees that split on a feature are re-evaluated for it; the ensemble
/// sum is always taken in tree order so an unchanged prediction reproduces the
/// baseline bit for bit.
pub fn permutation_importance(model: &RiskModel, data: &Dataset, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if data.n_rows() == 0 {
        return Err(Error::Input("permutation importance needs data".into()));
    }
    if reps == 0 {
        return Err(Error::Input("reps must be at least 1".into()));
    }
    if data.n_features() != model.n_features {
        return Err(Error::Input(format!(
            "dataset has {} features, model expects {}",
            data.n_features(),
            model.n_features
        )));
    }
    let n = data.n_rows();
    let n_trees = model.trees.len();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| data.row(i)).collect();
    let per_tree: Vec<Vec<f64>> = model
        .trees
        .iter()
        .map(|t| rows.iter().map(|r| t.predict(r)).collect())
        .collect();
    let mse = |pred: &dyn Fn(usize) -> f64| -> f64 {
        (0..n).map(|i| (pred(i) - data.y()[i]).powi(2)).sum::<f64>() / n as f64
    };
    let ensemble = |i: usize, t_override: &dyn Fn(usize, usize) -> Option<f64>| -> f64 {
        let s: f64 = (0..n_trees)
            .map(|t| t_override(t, i).unwrap_or(per_tree[t][i]))
            .sum();
        s / n_trees as f64
    };
    let baseline = mse(&|i| ensemble(i, &|_, _| None));

    let users: Vec<Vec<bool>> = {
        let mut u = vec![vec![false; n_trees]; model.n_features];
        for (t, tree) in model.trees.iter().enumerate() {
            for f in tree.features_used() {
                u[f][t] = true;
            }
        }
        u
    };

    let mut out = Vec::with_capacity(model.n_features);
    for j in 0..model.n_features {
        let mut total = 0.0;
        for rep in 0..reps {
            let mut rng = seed::rng(seed, &[stage::IMPORTANCE, j as u64, rep as u64]);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut replaced: Vec<Option<Vec<f64>>> = vec![None; n_trees];
            for (t, tree) in model.trees.iter().enumerate() {
                if users[j][t] {
                    let mut scratch = Vec::with_capacity(model.n_features);
                    let preds = (0..n)
                        .map(|i| {
                            scratch.clear();
                            scratch.extend_from_slice(&rows[i]);
                            scratch[j] = rows[perm[i]][j];
                            tree.predict(&scratch)
                        })
                        .collect();
                    replaced[t] = Some(preds);
                }
            }
            let permuted = mse(&|i| ensemble(i, &|t, i| replaced[t].as_ref().map(|p| p[i])));
            total += permuted - baseline;
        }
        out.push(total / reps as f64);
    }
    Ok(out)
}
