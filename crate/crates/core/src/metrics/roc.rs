use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocResult {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`,
    /// one point per distinct score.
    pub points: Vec<(f64, f64)>,
    /// Score at which each point after the first is reached.
    pub thresholds: Vec<f64>,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
}

impl RocResult {
    /// Trapezoidal area under `points`.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

/// ROC curve and AUC. The AUC is the Mann-Whitney probability that a positive
/// outscores a negative, with ties counted as one half.
pub fn roc_auc(scores: &[f64], outcomes: &[bool]) -> Result<RocResult> {
    if scores.len() != outcomes.len() {
        return Err(Error::Input(format!(
            "{} scores but {} outcomes",
            scores.len(),
            outcomes.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Input(format!("non-finite score {s}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let n_pos = outcomes.iter().filter(|&&y| y).count() as u64;
    let n_neg = outcomes.len() as u64 - n_pos;

    let rate = |k: u64, n: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    // Twice the Mann-Whitney count, so ties stay integral.
    let mut twice_u: u64 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if outcomes[order[i]] {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        // Positives here beat every negative with a lower score, which are the
        // negatives not yet seen, and tie with this group's negatives.
        twice_u += gp * (2 * (n_neg - fp - gn) + gn);
        tp += gp;
        fp += gn;
        points.push((rate(fp, n_neg), rate(tp, n_pos)));
        thresholds.push(s);
    }
    let auc = (n_pos > 0 && n_neg > 0).then(|| twice_u as f64 / (2 * n_pos * n_neg) as f64);
    Ok(RocResult { points, thresholds, auc })
}
