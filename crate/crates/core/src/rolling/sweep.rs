use rayon::prelude::*;
use serde::Serialize;

use super::bootstrap::percentile_interval;
use super::{Backtest, Interval};
use crate::error::{Error, Result};
use crate::policy::percent;
use crate::seed::stage;

/// Sentinel above every score, so the rule never prescribes.
pub const NEVER_K: f64 = 1.0 + 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub k: f64,
    pub windows: usize,
    pub mean_pct_delta_rho: Option<f64>,
    pub mean_pct_delta_buti: Option<f64>,
    pub rho_ci: Option<Interval>,
    pub buti_ci: Option<Interval>,
}

/// `0, 1/steps, ..., 1` followed by the never-prescribe sentinel.
pub fn default_k_grid(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    let mut k: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    k.push(NEVER_K);
    k
}

/// Per-window counts for every `k` from one weighting of the window.
///
/// `sorted` holds `(m, rho_j, y, weight)` ascending in `m`; returns the
/// window percentages at each `k`.
fn window_curve(sorted: &[(f64, bool, bool, u32)], k_grid: &[f64]) -> Vec<(Option<f64>, Option<f64>)> {
    let rx: u64 = sorted.iter().filter(|r| r.1).map(|r| r.3 as u64).sum();
    let rx_pos: u64 = sorted.iter().filter(|r| r.1 && r.2).map(|r| r.3 as u64).sum();
    // Suffix sums of weight and weight * y from position i onward.
    let mut suffix = vec![(0u64, 0u64); sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        let (_, _, y, w) = sorted[i];
        suffix[i] = (suffix[i + 1].0 + w as u64, suffix[i + 1].1 + if y { w as u64 } else { 0 });
    }
    k_grid
        .iter()
        .map(|&k| {
            let first = sorted.partition_point(|r| r.0 < k);
            let (given, given_pos) = suffix[first];
            (
                percent(given as i64 - rx as i64, rx as usize),
                percent(given_pos as i64 - rx_pos as i64, rx_pos as usize),
            )
        })
        .collect()
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// `(pct_delta_rho, pct_delta_buti)` per grid point.
type Curve = Vec<(Option<f64>, Option<f64>)>;

/// Machine-only rule at every `k`, averaged over windows of their
/// percentages, with intervals from the same resamples as the ex-post run.
pub fn machine_only_sweep(bt: &Backtest<'_>, k_grid: &[f64]) -> Result<Vec<SweepPoint>> {
    if let Some(k) = k_grid.iter().find(|k| !k.is_finite()) {
        return Err(Error::config("k_grid", format!("non-finite threshold {k}")));
    }
    let windows: Vec<_> = bt.windows.iter().filter(|w| !w.is_empty()).collect();
    // Per window: point curve, then one curve per resample.
    let curves: Vec<(Curve, Vec<Curve>)> = windows
        .par_iter()
        .map(|w| -> Result<_> {
            let records = bt.window_records(w)?;
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.sort_by(|&i, &j| records[i].m.total_cmp(&records[j].m));
            let with = |weights: &[u32]| -> Vec<(f64, bool, bool, u32)> {
                order.iter().map(|&i| (records[i].m, records[i].rho_j, records[i].y, weights[i])).collect()
            };
            let point = window_curve(&with(&vec![1; records.len()]), k_grid);
            let reps = bt
                .replicates(w.eval.clone(), &[stage::BOOTSTRAP, stage::EXPOST, w.id as u64])
                .iter()
                .map(|wt| window_curve(&with(wt), k_grid))
                .collect();
            Ok((point, reps))
        })
        .collect::<Result<_>>()?;

    let n_reps = bt.schedule.bootstrap;
    Ok(k_grid
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let rho_reps: Vec<f64> = (0..n_reps)
                .filter_map(|r| mean(curves.iter().map(|c| c.1[r][ki].0)))
                .collect();
            let buti_reps: Vec<f64> = (0..n_reps)
                .filter_map(|r| mean(curves.iter().map(|c| c.1[r][ki].1)))
                .collect();
            SweepPoint {
                k,
                windows: curves.iter().filter(|c| c.0[ki].0.is_some()).count(),
                mean_pct_delta_rho: mean(curves.iter().map(|c| c.0[ki].0)),
                mean_pct_delta_buti: mean(curves.iter().map(|c| c.0[ki].1)),
                rho_ci: percentile_interval(&rho_reps),
                buti_ci: percentile_interval(&buti_reps),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{evaluate_machine_only, PolicyRecord};

    #[test]
    fn curve_matches_direct_evaluation() {
        let recs: Vec<PolicyRecord> = [(0.1, 1, 0), (0.2, 0, 0), (0.5, 1, 1), (0.6, 0, 1), (0.9, 0, 1)]
            .iter()
            .map(|&(m, r, y)| PolicyRecord::new(m, r == 1, y == 1))
            .collect();
        let sorted: Vec<_> = recs.iter().map(|r| (r.m, r.rho_j, r.y, 1)).collect();
        let grid = default_k_grid(20);
        for (k, (rho, buti)) in grid.iter().zip(window_curve(&sorted, &grid)) {
            let o = evaluate_machine_only(&recs, *k).unwrap();
            assert_eq!(rho, o.pct_delta_rho, "k={k}");
            assert_eq!(buti, o.pct_delta_buti, "k={k}");
        }
        let last = window_curve(&sorted, &[NEVER_K])[0];
        assert_eq!(last, (Some(-100.0), Some(-100.0)));
        let first = window_curve(&sorted, &[0.0])[0];
        assert_eq!(first.0, Some(150.0));
    }
}
