//! Two-threshold prescription rules and their evaluation against observed
//! physician choices.
//!
//! A rule delays prescriptions below `k_l`, prescribes instantly above `k_h`
//! and defers to the physician in the closed band `[k_l, k_h]`. Outcomes are
//! counted against the physician's own instant prescriptions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold pair. `k_l <= k_h`; values may sit just outside `[0, 1]` when
/// they act as "never"/"always" sentinels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub k_l: f64,
    pub k_h: f64,
}

impl PolicyParams {
    /// The rule that never overrides the physician.
    pub const IDENTITY: PolicyParams = PolicyParams { k_l: 0.0, k_h: 1.0 };

    pub fn new(k_l: f64, k_h: f64) -> Result<Self> {
        if !(k_l.is_finite() && k_h.is_finite()) {
            return Err(Error::Input(format!("thresholds must be finite, got ({k_l}, {k_h})")));
        }
        if k_l > k_h {
            return Err(Error::Input(format!("k_l {k_l} exceeds k_h {k_h}")));
        }
        Ok(PolicyParams { k_l, k_h })
    }
}

/// Policy-maker preferences: sickness cost `a` and social cost of prescribing `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub a: f64,
    pub b: f64,
}

impl Preferences {
    /// Requires `0 < b < a`.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(b > 0.0 && b < a && a.is_finite()) {
            return Err(Error::Input(format!("preferences need 0 < b < a, got a={a}, b={b}")));
        }
        Ok(Preferences { a, b })
    }

    /// Only requires both costs to be positive.
    pub fn new_unordered(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Input(format!("preferences need a, b > 0, got a={a}, b={b}")));
        }
        Ok(Preferences { a, b })
    }
}

/// Predicted risk, physician choice, outcome and exemption status of one consultation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub m: f64,
    pub rho_j: bool,
    pub y: bool,
    #[serde(default)]
    pub pregnant: bool,
}

impl PolicyRecord {
    pub fn new(m: f64, rho_j: bool, y: bool) -> Self {
        PolicyRecord { m, rho_j, y, pregnant: false }
    }
}

pub fn apply_rule(m: f64, rho_j: bool, params: PolicyParams) -> bool {
    if m < params.k_l {
        false
    } else if m <= params.k_h {
        rho_j
    } else {
        true
    }
}

/// Prescribe iff `k <= m`.
pub fn apply_machine_only(m: f64, k: f64) -> bool {
    k <= m
}

/// Policy-maker payoff of prescription `p` given outcome `y`.
pub fn payoff(p: bool, y: bool, prefs: Preferences) -> f64 {
    let p = p as u8 as f64;
    let y = y as u8 as f64;
    -prefs.a * y * (1.0 - y * p) - prefs.b * p
}

/// Counts and relative changes of a policy against physician choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub n: usize,
    pub observed_rx: usize,
    pub observed_treated_buti: usize,
    pub delta_rho: i64,
    pub delta_buti: i64,
    /// Number of records whose decision differs from the physician's.
    pub changed: usize,
    /// `None` when `observed_rx == 0`.
    pub pct_delta_rho: Option<f64>,
    /// `None` when `observed_treated_buti == 0`.
    pub pct_delta_buti: Option<f64>,
}

/// Running counts from which a [`PolicyOutcome`] is built.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutcomeCounts {
    pub n: usize,
    pub observed_rx: usize,
    pub observed_treated_buti: usize,
    pub delta_rho: i64,
    pub delta_buti: i64,
    pub changed: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, rho_j: bool, y: bool, decision: bool) {
        self.add_weighted(rho_j, y, decision, 1);
    }

    /// Add `weight` copies of one record.
    pub fn add_weighted(&mut self, rho_j: bool, y: bool, decision: bool, weight: usize) {
        self.n += weight;
        self.observed_rx += rho_j as usize * weight;
        self.observed_treated_buti += (rho_j && y) as usize * weight;
        let d = (decision as i64 - rho_j as i64) * weight as i64;
        self.delta_rho += d;
        if y {
            self.delta_buti += d;
        }
        self.changed += (d != 0) as usize * weight;
    }

    pub fn merge(&mut self, other: &OutcomeCounts) {
        self.n += other.n;
        self.observed_rx += other.observed_rx;
        self.observed_treated_buti += other.observed_treated_buti;
        self.delta_rho += other.delta_rho;
        self.delta_buti += other.delta_buti;
        self.changed += other.changed;
    }

    pub fn outcome(&self) -> PolicyOutcome {
        PolicyOutcome {
            n: self.n,
            observed_rx: self.observed_rx,
            observed_treated_buti: self.observed_treated_buti,
            delta_rho: self.delta_rho,
            delta_buti: self.delta_buti,
            changed: self.changed,
            pct_delta_rho: percent(self.delta_rho, self.observed_rx),
            pct_delta_buti: percent(self.delta_buti, self.observed_treated_buti),
        }
    }
}

pub fn percent(delta: i64, base: usize) -> Option<f64> {
    (base > 0).then(|| 100.0 * delta as f64 / base as f64)
}

/// Counts of `decide` applied to every record.
pub fn evaluate_with(records: &[PolicyRecord], decide: impl Fn(&PolicyRecord) -> bool) -> PolicyOutcome {
    let mut counts = OutcomeCounts::default();
    for r in records {
        counts.add(r.rho_j, r.y, decide(r));
    }
    counts.outcome()
}

pub fn evaluate(records: &[PolicyRecord], params: PolicyParams) -> Result<PolicyOutcome> {
    non_empty(records)?;
    Ok(evaluate_with(records, |r| apply_rule(r.m, r.rho_j, params)))
}

/// As [`evaluate`], but pregnant patients keep the physician's decision.
pub fn evaluate_exempt(records: &[PolicyRecord], params: PolicyParams) -> Result<PolicyOutcome> {
    non_empty(records)?;
    Ok(evaluate_with(records, |r| exempt_decision(r, params)))
}

pub fn exempt_decision(r: &PolicyRecord, params: PolicyParams) -> bool {
    if r.pregnant {
        r.rho_j
    } else {
        apply_rule(r.m, r.rho_j, params)
    }
}

pub fn evaluate_machine_only(records: &[PolicyRecord], k: f64) -> Result<PolicyOutcome> {
    non_empty(records)?;
    Ok(evaluate_with(records, |r| apply_machine_only(r.m, k)))
}

/// `a * delta_buti - b * delta_rho` in unnormalized counts.
pub fn evaluate_payoff_gain(records: &[PolicyRecord], params: PolicyParams, prefs: Preferences) -> Result<f64> {
    let o = evaluate(records, params)?;
    Ok(payoff_gain(&o, prefs))
}

pub fn payoff_gain(o: &PolicyOutcome, prefs: Preferences) -> f64 {
    prefs.a * o.delta_buti as f64 - prefs.b * o.delta_rho as f64
}

/// A record for the follow-up diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowupRecord {
    pub m: f64,
    pub rho_j: bool,
    pub post_test_rx: bool,
}

/// Share of untreated patients with `m > k_h` who received a prescription
/// after the test result. `None` if no record qualifies.
pub fn post_test_followup(records: &[FollowupRecord], k_h: f64) -> Option<f64> {
    let (mut n, mut followed) = (0usize, 0usize);
    for r in records.iter().filter(|r| r.m > k_h && !r.rho_j) {
        n += 1;
        followed += r.post_test_rx as usize;
    }
    (n > 0).then(|| followed as f64 / n as f64)
}

fn non_empty(records: &[PolicyRecord]) -> Result<()> {
    if records.is_empty() {
        Err(Error::Input("policy evaluation needs at least one record".into()))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn five() -> Vec<PolicyRecord> {
        [(0.1, 1, 0), (0.2, 0, 0), (0.5, 1, 1), (0.6, 0, 1), (0.9, 0, 1)]
            .iter()
            .map(|&(m, rho, y)| PolicyRecord::new(m, rho == 1, y == 1))
            .collect()
    }

    fn p(k_l: f64, k_h: f64) -> PolicyParams {
        PolicyParams::new(k_l, k_h).unwrap()
    }

    #[test]
    fn rule_bands() {
        assert!(!apply_rule(0.05, true, p(0.3, 0.7)));
        assert!(apply_rule(0.5, true, p(0.3, 0.7)));
        assert!(!apply_rule(0.5, false, p(0.3, 0.7)));
        assert!(apply_rule(0.8, false, p(0.3, 0.7)));
        // Closed middle band.
        assert!(apply_rule(0.3, true, p(0.3, 0.7)));
        assert!(!apply_rule(0.7, false, p(0.3, 0.7)));
        for m in [0.0, 0.2, 0.5, 1.0] {
            for rho in [false, true] {
                assert_eq!(apply_rule(m, rho, PolicyParams::IDENTITY), rho);
            }
        }
    }

    #[test]
    fn machine_only_boundaries() {
        assert!(apply_machine_only(0.0, 0.0));
        assert!(apply_machine_only(0.4, 0.4));
        assert!(!apply_machine_only(1.0, 1.0 + 1e-9));
    }

    #[test]
    fn payoff_values() {
        let prefs = Preferences::new(2.0, 1.0).unwrap();
        assert_eq!(payoff(true, true, prefs), -1.0);
        assert_eq!(payoff(false, true, prefs), -2.0);
        assert_eq!(payoff(false, false, prefs), 0.0);
        assert_eq!(payoff(true, false, prefs), -1.0);
    }

    #[test]
    fn preferences_ordering_enforced() {
        assert!(Preferences::new(1.0, 2.0).is_err());
        assert!(Preferences::new(1.0, 0.0).is_err());
        assert!(Preferences::new_unordered(1.0, 2.0).is_ok());
    }

    #[test]
    fn five_record_evaluation() {
        let o = evaluate(&five(), p(0.3, 0.7)).unwrap();
        assert_eq!((o.n, o.observed_rx, o.observed_treated_buti), (5, 2, 1));
        assert_eq!((o.delta_rho, o.delta_buti), (0, 1));
        assert_eq!(o.pct_delta_rho, Some(0.0));
        assert_eq!(o.pct_delta_buti, Some(100.0));

        let id = evaluate(&five(), PolicyParams::IDENTITY).unwrap();
        assert_eq!((id.delta_rho, id.delta_buti, id.changed), (0, 0, 0));

        let mo = evaluate_machine_only(&five(), 0.0).unwrap();
        assert_eq!((mo.delta_rho, mo.delta_buti), (3, 2));
    }

    #[test]
    fn payoff_gain_example() {
        let prefs = Preferences::new(2.0, 1.0).unwrap();
        assert_eq!(evaluate_payoff_gain(&five(), p(0.3, 0.7), prefs).unwrap(), 2.0);
        assert_eq!(evaluate_payoff_gain(&five(), PolicyParams::IDENTITY, prefs).unwrap(), 0.0);
    }

    #[test]
    fn exemption_examples() {
        let mut recs = five();
        recs[0].pregnant = true;
        let o = evaluate_exempt(&recs, p(0.3, 0.7)).unwrap();
        assert_eq!((o.delta_rho, o.delta_buti), (1, 1));

        let all: Vec<_> = five().into_iter().map(|r| PolicyRecord { pregnant: true, ..r }).collect();
        let o = evaluate_exempt(&all, p(0.3, 0.7)).unwrap();
        assert_eq!((o.delta_rho, o.delta_buti), (0, 0));

        assert_eq!(evaluate_exempt(&five(), p(0.3, 0.7)).unwrap(), evaluate(&five(), p(0.3, 0.7)).unwrap());
    }

    #[test]
    fn undefined_percentages() {
        let recs = vec![PolicyRecord::new(0.9, false, false)];
        let o = evaluate(&recs, p(0.3, 0.7)).unwrap();
        assert_eq!(o.delta_rho, 1);
        assert_eq!(o.pct_delta_rho, None);
        assert_eq!(o.pct_delta_buti, None);
        assert!(evaluate(&[], p(0.3, 0.7)).is_err());
    }

    #[test]
    fn followup_share() {
        let recs = [
            FollowupRecord { m: 0.9, rho_j: false, post_test_rx: true },
            FollowupRecord { m: 0.8, rho_j: false, post_test_rx: true },
            FollowupRecord { m: 0.95, rho_j: false, post_test_rx: false },
            FollowupRecord { m: 0.9, rho_j: true, post_test_rx: false },
            FollowupRecord { m: 0.2, rho_j: false, post_test_rx: false },
        ];
        let share = post_test_followup(&recs, 0.7).unwrap();
        assert!((share - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(post_test_followup(&recs[..2], 0.7), Some(1.0));
        assert_eq!(post_test_followup(&recs[3..], 0.7), None);
    }

    fn records_strategy() -> impl Strategy<Value = Vec<PolicyRecord>> {
        prop::collection::vec((0u8..=20, any::<bool>(), any::<bool>(), any::<bool>()), 1..80).prop_map(|v| {
            v.into_iter()
                .map(|(m, rho, y, preg)| PolicyRecord { m: m as f64 / 20.0, rho_j: rho, y, pregnant: preg })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn decomposition_identity(recs in records_strategy(), a in 0u8..=20, b in 0u8..=20) {
            let (k_l, k_h) = (a.min(b) as f64 / 20.0, a.max(b) as f64 / 20.0);
            let o = evaluate(&recs, p(k_l, k_h)).unwrap();
            let delayed = recs.iter().filter(|r| r.m < k_l && r.rho_j).count() as i64;
            let added = recs.iter().filter(|r| r.m > k_h && !r.rho_j).count() as i64;
            let delayed_y = recs.iter().filter(|r| r.m < k_l && r.rho_j && r.y).count() as i64;
            let added_y = recs.iter().filter(|r| r.m > k_h && !r.rho_j && r.y).count() as i64;
            prop_assert_eq!(o.delta_rho, added - delayed);
            prop_assert_eq!(o.delta_buti, added_y - delayed_y);
            prop_assert!(o.delta_rho.unsigned_abs() as usize <= o.n);
        }

        #[test]
        fn threshold_monotonicity(recs in records_strategy(), a in 0u8..=20, b in 0u8..=20, c in 0u8..=20) {
            let mut ks = [a, b, c];
            ks.sort_unstable();
            let [lo, mid, hi] = ks.map(|k| k as f64 / 20.0);
            // Raising k_l with k_h fixed never increases delta_rho.
            let low = evaluate(&recs, p(lo, hi)).unwrap().delta_rho;
            let raised = evaluate(&recs, p(mid, hi)).unwrap().delta_rho;
            prop_assert!(raised <= low);
            // Lowering k_h with k_l fixed never decreases delta_rho.
            let high = evaluate(&recs, p(lo, hi)).unwrap().delta_rho;
            let lowered = evaluate(&recs, p(lo, mid)).unwrap().delta_rho;
            prop_assert!(lowered >= high);
        }

        #[test]
        fn dominance_sign_rule(recs in records_strategy(), a in 0u8..=20, b in 0u8..=20) {
            let params = p(a.min(b) as f64 / 20.0, a.max(b) as f64 / 20.0);
            let o = evaluate(&recs, params).unwrap();
            if o.delta_buti >= 0 && o.delta_rho <= 0 && (o.delta_buti > 0 || o.delta_rho < 0) {
                for ai in 1..=10 {
                    for bi in 1..ai {
                        let prefs = Preferences::new(ai as f64, bi as f64).unwrap();
                        prop_assert!(payoff_gain(&o, prefs) > 0.0);
                    }
                }
            }
        }

        #[test]
        fn exemption_is_split_evaluation(recs in records_strategy(), a in 0u8..=20, b in 0u8..=20) {
            let params = p(a.min(b) as f64 / 20.0, a.max(b) as f64 / 20.0);
            let ex = evaluate_exempt(&recs, params).unwrap();
            let free: Vec<_> = recs.iter().copied().filter(|r| !r.pregnant).collect();
            let (d_rho, d_buti) = if free.is_empty() {
                (0, 0)
            } else {
                let o = evaluate(&free, params).unwrap();
                (o.delta_rho, o.delta_buti)
            };
            prop_assert_eq!(ex.delta_rho, d_rho);
            prop_assert_eq!(ex.delta_buti, d_buti);
            prop_assert_eq!(ex.n, recs.len());
        }
    }
}
