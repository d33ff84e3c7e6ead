use std::collections::BTreeMap;

use serde::Serialize;

use crate::cohort::Cohort;
use crate::error::{Error, Result};

/// A scored consultation, as needed by the clinic statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord<'a> {
    pub clinic_id: &'a str,
    pub m: f64,
    pub y: bool,
    pub rho_j: bool,
}

/// Per clinic: mean of `y - m` among treated minus the same among untreated.
/// `None` for clinics without both treated and untreated patients.
pub fn mean_deviation(records: &[ScoredRecord<'_>]) -> BTreeMap<String, Option<f64>> {
    // (sum treated, n treated, sum untreated, n untreated)
    let mut acc: BTreeMap<&str, (f64, usize, f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.clinic_id).or_default();
        let dev = r.y as u8 as f64 - r.m;
        if r.rho_j {
            e.0 += dev;
            e.1 += 1;
        } else {
            e.2 += dev;
            e.3 += 1;
        }
    }
    acc.into_iter()
        .map(|(id, (st, nt, su, nu))| {
            let d = (nt > 0 && nu > 0).then(|| st / nt as f64 - su / nu as f64);
            (id.to_string(), d)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClinicRate {
    pub clinic_id: String,
    pub n: usize,
    /// Prescription rate among positives; `None` without positives.
    pub rx_rate_pos: Option<f64>,
    /// Prescription rate among negatives; `None` without negatives.
    pub rx_rate_neg: Option<f64>,
}

/// Physician prescription rates conditional on the test outcome, per clinic.
pub fn clinic_rates(cohort: &Cohort) -> Vec<ClinicRate> {
    // (rx | y, n y, rx | not y, n not y)
    let mut acc: BTreeMap<&str, (usize, usize, usize, usize)> = BTreeMap::new();
    for c in &cohort.consultations {
        let e = acc.entry(&c.clinic_id).or_default();
        if c.y {
            e.0 += c.rho_j as usize;
            e.1 += 1;
        } else {
            e.2 += c.rho_j as usize;
            e.3 += 1;
        }
    }
    acc.into_iter()
        .map(|(id, (rp, np, rn, nn))| ClinicRate {
            clinic_id: id.to_string(),
            n: np + nn,
            rx_rate_pos: (np > 0).then(|| rp as f64 / np as f64),
            rx_rate_neg: (nn > 0).then(|| rn as f64 / nn as f64),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram over `[min, max]`; the last bin is closed.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<Vec<HistogramBin>> {
    if n_bins == 0 {
        return Err(Error::Input("histogram needs at least one bin".into()));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; n_bins];
    for v in values {
        let k = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lo: lo + k as f64 * width,
            hi: lo + (k + 1) as f64 * width,
            count,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(clinic_id: &str, m: f64, y: bool, rho_j: bool) -> ScoredRecord<'_> {
        ScoredRecord { clinic_id, m, y, rho_j }
    }

    #[test]
    fn worked_deviation() {
        let recs = [
            rec("A", 0.6, true, true),
            rec("A", 0.2, false, true),
            rec("A", 0.8, true, false),
            rec("A", 0.3, false, false),
            rec("B", 0.3, false, true),
        ];
        let d = mean_deviation(&recs);
        assert!((d["A"].unwrap() - 0.15).abs() < 1e-12);
        assert_eq!(d["B"], None);
    }

    #[test]
    fn exact_scores_zero_deviation() {
        let recs = [rec("A", 1.0, true, true), rec("A", 0.0, false, false), rec("A", 1.0, true, false)];
        assert_eq!(mean_deviation(&recs)["A"], Some(0.0));
    }

    #[test]
    fn histogram_counts() {
        let h = histogram(&[0.0, 0.1, 0.5, 1.0], 2).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), [2, 2]);
        assert_eq!(histogram(&[0.3, 0.3], 3).unwrap()[0].count, 2);
        assert!(histogram(&[], 3).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn shift_invariance(
            rows in prop::collection::vec((0.0f64..1.0, any::<bool>(), any::<bool>()), 2..40),
            c in -0.5f64..0.5,
        ) {
            let base: Vec<_> = rows.iter().map(|&(m, y, r)| rec("A", m, y, r)).collect();
            let shifted: Vec<_> = rows.iter().map(|&(m, y, r)| rec("A", m + c, y, r)).collect();
            match (mean_deviation(&base)["A"], mean_deviation(&shifted)["A"]) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }
}
