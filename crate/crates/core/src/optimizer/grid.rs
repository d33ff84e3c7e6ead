use crate::error::{Error, Result};
use crate::policy::PolicyRecord;

/// Threshold candidates for a score sample: the midpoint between each pair of
/// consecutive distinct scores plus one sentinel below the minimum and one
/// above the maximum.
///
/// Threshold `i` separates distinct score `i - 1` from distinct score `i`, so
/// any two thresholds between the same neighbours give the same decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub thresholds: Vec<f64>,
    /// Distance of each sentinel from the nearest score.
    pub epsilon: f64,
}

/// Sentinel offset used when every score is equal.
const LONE_SCORE_EPSILON: f64 = 1e-6;

impl CandidateGrid {
    /// `scores` must be sorted ascending, distinct and finite.
    pub fn from_distinct(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Input("candidate grid needs at least one score".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Input("scores must be finite".into()));
        }
        if scores.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("scores must be strictly increasing".into()));
        }
        let epsilon = scores
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let epsilon = if epsilon.is_finite() { epsilon / 2.0 } else { LONE_SCORE_EPSILON };
        let mut thresholds = Vec::with_capacity(scores.len() + 1);
        thresholds.push(scores[0] - epsilon);
        thresholds.extend(scores.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        thresholds.push(scores[scores.len() - 1] + epsilon);
        Ok(CandidateGrid { thresholds, epsilon })
    }

    pub fn from_records(records: &[PolicyRecord]) -> Result<Self> {
        Self::from_distinct(&distinct_scores(records)?)
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

/// Sorted distinct scores of `records`.
pub fn distinct_scores(records: &[PolicyRecord]) -> Result<Vec<f64>> {
    if let Some(r) = records.iter().find(|r| !r.m.is_finite()) {
        return Err(Error::Input(format!("non-finite risk score {}", r.m)));
    }
    let mut scores: Vec<f64> = records.iter().map(|r| r.m).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints_and_sentinels() {
        let g = CandidateGrid::from_distinct(&[0.1, 0.2, 0.5]).unwrap();
        assert!((g.epsilon - 0.05).abs() < 1e-15);
        let expect = [0.05, 0.15, 0.35, 0.55];
        for (t, e) in g.thresholds.iter().zip(expect) {
            assert!((t - e).abs() < 1e-15, "{t} vs {e}");
        }
        assert!(g.thresholds.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_score() {
        let g = CandidateGrid::from_distinct(&[0.4]).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.thresholds[0] < 0.4 && g.thresholds[1] > 0.4);
    }

    #[test]
    fn rejects_bad_scores() {
        assert!(CandidateGrid::from_distinct(&[]).is_err());
        assert!(CandidateGrid::from_distinct(&[0.2, 0.2]).is_err());
        assert!(CandidateGrid::from_distinct(&[f64::NAN]).is_err());
    }
}
