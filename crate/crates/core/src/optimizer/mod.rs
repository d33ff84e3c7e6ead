//! Ex-post threshold optimization under a one-sided constraint, and the
//! conservative slack targeting used for parameters applied forward.
//!
//! Records are grouped by distinct score. A threshold pair is a pair of grid
//! indices `a <= b`: `k_l = t[a]` delays every prescription in groups below
//! `a` and `k_h = t[b]` adds a prescription for every group from `b` on. With
//! prefix sums over the groups each pair costs O(1) to evaluate.

mod grid;
mod oracle;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{self, PolicyOutcome, PolicyParams, PolicyRecord};

pub use grid::{distinct_scores, CandidateGrid};
pub use oracle::{brute_force_oracle, brute_force_with_slack, ORACLE_MAX_RECORDS};

/// Which constrained program to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// Minimize `delta_rho` subject to `delta_buti >= slack`.
    Reduction,
    /// Maximize `delta_buti` subject to `delta_rho <= -slack`.
    Buti,
}

impl Rule {
    pub const ALL: [Rule; 2] = [Rule::Reduction, Rule::Buti];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Reduction => "reduction",
            Rule::Buti => "buti",
        }
    }

    /// The optimized count of an outcome.
    pub fn objective(self, o: &PolicyOutcome) -> i64 {
        match self {
            Rule::Reduction => o.delta_rho,
            Rule::Buti => o.delta_buti,
        }
    }

    /// The constrained count of an outcome.
    pub fn constraint(self, o: &PolicyOutcome) -> i64 {
        match self {
            Rule::Reduction => o.delta_buti,
            Rule::Buti => o.delta_rho,
        }
    }

    pub fn objective_pct(self, o: &PolicyOutcome) -> Option<f64> {
        match self {
            Rule::Reduction => o.pct_delta_rho,
            Rule::Buti => o.pct_delta_buti,
        }
    }

    pub fn constraint_pct(self, o: &PolicyOutcome) -> Option<f64> {
        match self {
            Rule::Reduction => o.pct_delta_buti,
            Rule::Buti => o.pct_delta_rho,
        }
    }

    /// Whether the constraint holds with the given slack.
    pub fn satisfied(self, o: &PolicyOutcome, slack: i64) -> bool {
        match self {
            Rule::Reduction => o.delta_buti >= slack,
            Rule::Buti => o.delta_rho <= -slack,
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduction" => Ok(Rule::Reduction),
            "buti" => Ok(Rule::Buti),
            other => Err(Error::config("rule", format!("unknown rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    /// Merge score groups into at most this many quantile bins before the
    /// scan. `None` searches the exact grid.
    pub max_grid: Option<usize>,
}

impl OptimizerOptions {
    /// The documented cap for the quantile grid.
    pub const QUANTILE_CAP: usize = 1000;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    pub rule: Rule,
    pub params: PolicyParams,
    /// Grid indices of `(k_l, k_h)`.
    pub classes: (usize, usize),
    pub outcome: PolicyOutcome,
    pub objective_value: i64,
    pub constraint_value: i64,
    pub slack: i64,
    pub feasible: bool,
}

impl OptimizerResult {
    pub(crate) fn from_outcome(
        rule: Rule,
        params: PolicyParams,
        classes: (usize, usize),
        outcome: PolicyOutcome,
        slack: i64,
    ) -> Self {
        OptimizerResult {
            rule,
            params,
            classes,
            objective_value: rule.objective(&outcome),
            constraint_value: rule.constraint(&outcome),
            feasible: rule.satisfied(&outcome, 0),
            slack,
            outcome,
        }
    }
}

/// Score groups with prefix counts, ready for O(1) pair evaluation.
#[derive(Debug, Clone)]
pub struct Scan {
    thresholds: Vec<f64>,
    /// Prescriptions (all, with y = 1) in groups `< a`.
    delay: Vec<(i64, i64)>,
    /// Non-prescriptions (all, with y = 1) in groups `>= b`.
    add: Vec<(i64, i64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Candidate {
    a: usize,
    b: usize,
    delta_rho: i64,
    delta_buti: i64,
    changed: i64,
}

impl Candidate {
    fn key(&self, rule: Rule) -> (i64, i64, i64, usize, usize) {
        match rule {
            Rule::Reduction => (self.delta_rho, -self.delta_buti, self.changed, self.a, self.b),
            Rule::Buti => (-self.delta_buti, self.delta_rho, self.changed, self.a, self.b),
        }
    }
}

/// One evaluated pair, as written to the optional audit trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub k_l_class: usize,
    pub k_h_class: usize,
    pub k_l: f64,
    pub k_h: f64,
    pub delta_rho: i64,
    pub delta_buti: i64,
}

impl Scan {
    pub fn new(records: &[PolicyRecord], options: &OptimizerOptions) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Input("optimizer needs at least one record".into()));
        }
        let scores = distinct_scores(records)?;
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&i, &j| records[i].m.total_cmp(&records[j].m));

        // Per distinct score: (rx, rx & y, no rx, no rx & y, records).
        let mut groups = vec![[0i64; 5]; scores.len()];
        let mut g = 0;
        for &i in &order {
            let r = &records[i];
            while scores[g] != r.m {
                g += 1;
            }
            let c = &mut groups[g];
            if r.rho_j {
                c[0] += 1;
                c[1] += r.y as i64;
            } else {
                c[2] += 1;
                c[3] += r.y as i64;
            }
            c[4] += 1;
        }

        let full = CandidateGrid::from_distinct(&scores)?;
        let (thresholds, groups) = match options.max_grid {
            Some(0) => return Err(Error::config("max_grid", "must be at least 1")),
            Some(cap) if scores.len() > cap => quantile_bins(&full, &groups, records.len(), cap),
            _ => (full.thresholds, groups),
        };

        let n_groups = groups.len();
        let mut delay = vec![(0, 0); n_groups + 1];
        for (i, c) in groups.iter().enumerate() {
            delay[i + 1] = (delay[i].0 + c[0], delay[i].1 + c[1]);
        }
        let mut add = vec![(0, 0); n_groups + 1];
        for (i, c) in groups.iter().enumerate().rev() {
            add[i] = (add[i + 1].0 + c[2], add[i + 1].1 + c[3]);
        }
        Ok(Scan { thresholds, delay, add })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    fn candidate(&self, a: usize, b: usize) -> Candidate {
        let (d, dy) = self.delay[a];
        let (p, py) = self.add[b];
        Candidate { a, b, delta_rho: p - d, delta_buti: py - dy, changed: p + d }
    }

    fn best(&self, rule: Rule, slack: i64) -> Option<Candidate> {
        let n = self.thresholds.len();
        (0..n)
            .into_par_iter()
            .filter_map(|a| {
                (a..n)
                    .map(|b| self.candidate(a, b))
                    .filter(|c| match rule {
                        Rule::Reduction => c.delta_buti >= slack,
                        Rule::Buti => c.delta_rho <= -slack,
                    })
                    .min_by_key(|c| c.key(rule))
            })
            .min_by_key(|c| c.key(rule))
    }

    /// Largest slack any pair can satisfy.
    fn max_slack(&self, rule: Rule) -> i64 {
        let last = self.thresholds.len() - 1;
        match rule {
            // Adding every untreated positive and delaying nothing.
            Rule::Reduction => self.add[0].1,
            // Delaying every prescription and adding nothing.
            Rule::Buti => self.delay[last].0,
        }
    }

    pub fn trace(&self) -> Vec<TraceRow> {
        let t = &self.thresholds;
        let mut rows = Vec::with_capacity(t.len() * (t.len() + 1) / 2);
        for a in 0..t.len() {
            for b in a..t.len() {
                let c = self.candidate(a, b);
                rows.push(TraceRow {
                    k_l_class: a,
                    k_h_class: b,
                    k_l: t[a],
                    k_h: t[b],
                    delta_rho: c.delta_rho,
                    delta_buti: c.delta_buti,
                });
            }
        }
        rows
    }
}

/// Merge score groups into at most `cap` bins of roughly equal record counts.
fn quantile_bins(full: &CandidateGrid, groups: &[[i64; 5]], n: usize, cap: usize) -> (Vec<f64>, Vec<[i64; 5]>) {
    let mut thresholds = vec![full.thresholds[0]];
    let mut bins: Vec<[i64; 5]> = Vec::with_capacity(cap);
    let mut current = [0i64; 5];
    let mut seen = 0usize;
    let mut next_bin = 1usize;
    for (g, c) in groups.iter().enumerate() {
        for k in 0..5 {
            current[k] += c[k];
        }
        seen += c[4] as usize;
        let last = g + 1 == groups.len();
        if !last && seen * cap >= next_bin * n {
            bins.push(std::mem::take(&mut current));
            thresholds.push(full.thresholds[g + 1]);
            while seen * cap >= next_bin * n {
                next_bin += 1;
            }
        }
    }
    bins.push(current);
    thresholds.push(full.thresholds[full.thresholds.len() - 1]);
    (thresholds, bins)
}

fn finish(records: &[PolicyRecord], scan: &Scan, rule: Rule, slack: i64, c: Candidate) -> Result<OptimizerResult> {
    let t = scan.thresholds();
    let params = PolicyParams { k_l: t[c.a], k_h: t[c.b] };
    let outcome = policy::evaluate(records, params)?;
    if outcome.delta_rho != c.delta_rho || outcome.delta_buti != c.delta_buti || outcome.changed as i64 != c.changed {
        return Err(Error::Invariant(format!(
            "scan counts ({}, {}) disagree with evaluation ({}, {}) at {:?}",
            c.delta_rho, c.delta_buti, outcome.delta_rho, outcome.delta_buti, params
        )));
    }
    Ok(OptimizerResult::from_outcome(rule, params, (c.a, c.b), outcome, slack))
}

pub fn optimize(records: &[PolicyRecord], rule: Rule, options: &OptimizerOptions) -> Result<OptimizerResult> {
    optimize_with_slack(records, rule, 0, options)?
        .ok_or_else(|| Error::Invariant("identity policy rejected by the optimizer".into()))
}

/// Solve with a tightened constraint. `None` if no pair satisfies it.
pub fn optimize_with_slack(
    records: &[PolicyRecord],
    rule: Rule,
    slack: i64,
    options: &OptimizerOptions,
) -> Result<Option<OptimizerResult>> {
    let scan = Scan::new(records, options)?;
    scan.best(rule, slack)
        .map(|c| finish(records, &scan, rule, slack, c))
        .transpose()
}

/// Largest reduction in prescriptions that does not lose treated bacterial cases.
pub fn optimize_ab_reduction(records: &[PolicyRecord]) -> Result<OptimizerResult> {
    optimize(records, Rule::Reduction, &OptimizerOptions::default())
}

/// Largest gain in treated bacterial cases that does not add prescriptions.
pub fn optimize_buti(records: &[PolicyRecord]) -> Result<OptimizerResult> {
    optimize(records, Rule::Buti, &OptimizerOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conservative {
    /// Solution at the chosen slack.
    pub result: OptimizerResult,
    /// Unconstrained-slack optimum on the same records.
    pub expost: OptimizerResult,
    pub alpha: f64,
    pub slack: i64,
}

impl Conservative {
    pub fn params(&self) -> PolicyParams {
        self.result.params
    }
}

/// Parameters that keep at least `alpha` of the ex-post objective while
/// holding as much constraint slack as possible.
///
/// Searches for the largest integer slack `s` whose solution still reaches
/// `alpha` times the ex-post optimum; the objective weakens monotonically in
/// `s`, so a binary search suffices.
pub fn conservative_params(
    records: &[PolicyRecord],
    alpha: f64,
    rule: Rule,
    options: &OptimizerOptions,
) -> Result<Conservative> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    let scan = Scan::new(records, options)?;
    let best = scan
        .best(rule, 0)
        .ok_or_else(|| Error::Invariant("identity policy rejected by the optimizer".into()))?;
    let target = alpha * rule_objective(rule, &best) as f64;
    let reaches = |c: &Candidate| {
        let v = rule_objective(rule, c) as f64;
        match rule {
            Rule::Reduction => v <= target + 1e-9,
            Rule::Buti => v >= target - 1e-9,
        }
    };

    let (mut lo, mut lo_cand) = (0i64, best);
    let mut hi = scan.max_slack(rule) + 1;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match scan.best(rule, mid) {
            Some(c) if reaches(&c) => {
                lo = mid;
                lo_cand = c;
            }
            _ => hi = mid,
        }
    }
    Ok(Conservative {
        result: finish(records, &scan, rule, lo, lo_cand)?,
        expost: finish(records, &scan, rule, 0, best)?,
        alpha,
        slack: lo,
    })
}

fn rule_objective(rule: Rule, c: &Candidate) -> i64 {
    match rule {
        Rule::Reduction => c.delta_rho,
        Rule::Buti => c.delta_buti,
    }
}

/// Write every evaluated pair as CSV.
pub fn write_trace<W: Write>(records: &[PolicyRecord], options: &OptimizerOptions, out: W) -> Result<()> {
    let scan = Scan::new(records, options)?;
    let mut w = csv::Writer::from_writer(out);
    for row in scan.trace() {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}
