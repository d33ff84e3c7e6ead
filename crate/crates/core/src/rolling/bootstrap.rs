use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::Interval;
use crate::error::{Error, Result};
use crate::policy::{apply_rule, OutcomeCounts, PolicyParams, PolicyRecord};
use crate::seed;

/// Lower and upper tail mass of the percentile interval.
const TAIL: f64 = 0.025;

/// Multiplicity of each record in each resample.
pub type Replicates = Vec<Vec<u32>>;

/// Draw `b` resamples of `n` records with replacement, as multiplicities.
///
/// With `clusters`, whole clusters are drawn instead: record `i` belongs to
/// cluster `clusters[i]` and inherits its multiplicity.
pub fn resample_weights(n: usize, b: usize, seed: u64, tags: &[u64], clusters: Option<&[u32]>) -> Replicates {
    (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut all_tags = tags.to_vec();
            all_tags.push(rep as u64);
            let mut rng = seed::rng(seed, &all_tags);
            match clusters {
                None => {
                    let mut w = vec![0u32; n];
                    for _ in 0..n {
                        w[rng.random_range(0..n)] += 1;
                    }
                    w
                }
                Some(ids) => {
                    let k = ids.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
                    let mut cw = vec![0u32; k];
                    for _ in 0..k {
                        cw[rng.random_range(0..k)] += 1;
                    }
                    ids.iter().map(|&c| cw[c as usize]).collect()
                }
            }
        })
        .collect()
}

/// Counts of one resample, with decisions held fixed per record.
pub(crate) fn weighted_counts(records: &[PolicyRecord], decisions: &[bool], weights: &[u32]) -> OutcomeCounts {
    let mut c = OutcomeCounts::default();
    for ((r, &d), &w) in records.iter().zip(decisions).zip(weights) {
        if w > 0 {
            c.add_weighted(r.rho_j, r.y, d, w as usize);
        }
    }
    c
}

/// Interval from the `TAIL` and `1 - TAIL` order statistics, rounding
/// outwards, so two values give their minimum and maximum.
pub fn percentile_interval(values: &[f64]) -> Option<Interval> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let last = (v.len() - 1) as f64;
    let lo = (TAIL * last).floor() as usize;
    let hi = ((1.0 - TAIL) * last).ceil() as usize;
    Some(Interval { lo: v[lo], hi: v[hi] })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapCi {
    pub pct_delta_rho: Option<Interval>,
    pub pct_delta_buti: Option<Interval>,
    /// Resamples with an undefined percentage, left out of the interval.
    pub excluded_rho: usize,
    pub excluded_buti: usize,
}

impl BootstrapCi {
    pub fn from_replicates(reps: &[OutcomeCounts]) -> Self {
        let rho: Vec<f64> = reps.iter().filter_map(|c| c.outcome().pct_delta_rho).collect();
        let buti: Vec<f64> = reps.iter().filter_map(|c| c.outcome().pct_delta_buti).collect();
        BootstrapCi {
            excluded_rho: reps.len() - rho.len(),
            excluded_buti: reps.len() - buti.len(),
            pct_delta_rho: percentile_interval(&rho),
            pct_delta_buti: percentile_interval(&buti),
        }
    }
}

/// Percentile intervals for both percentages with `params` held fixed.
pub fn bootstrap_ci(records: &[PolicyRecord], params: PolicyParams, b: usize, seed: u64) -> Result<BootstrapCi> {
    if b < 2 {
        return Err(Error::config("bootstrap", "needs at least 2 resamples"));
    }
    if records.is_empty() {
        return Err(Error::Input("bootstrap needs at least one record".into()));
    }
    let decisions: Vec<bool> = records.iter().map(|r| apply_rule(r.m, r.rho_j, params)).collect();
    let weights = resample_weights(records.len(), b, seed, &[seed::stage::BOOTSTRAP], None);
    let reps: Vec<OutcomeCounts> = weights.iter().map(|w| weighted_counts(records, &decisions, w)).collect();
    Ok(BootstrapCi::from_replicates(&reps))
}
