use super::{CandidateGrid, OptimizerResult, Rule};
use crate::error::{Error, Result};
use crate::policy::{self, PolicyParams, PolicyRecord};

/// (key, a, b, outcome)
type Candidate = ((i64, i64, usize), usize, usize, policy::PolicyOutcome);

/// Largest sample the exhaustive search accepts.
pub const ORACLE_MAX_RECORDS: usize = 200;

/// Exhaustive search over every candidate pair, each evaluated from scratch.
pub fn brute_force_oracle(records: &[PolicyRecord], rule: Rule) -> Result<OptimizerResult> {
    brute_force_with_slack(records, rule, 0)
}

pub fn brute_force_with_slack(records: &[PolicyRecord], rule: Rule, slack: i64) -> Result<OptimizerResult> {
    if records.len() > ORACLE_MAX_RECORDS {
        return Err(Error::Input(format!(
            "oracle accepts at most {ORACLE_MAX_RECORDS} records, got {}",
            records.len()
        )));
    }
    if records.is_empty() {
        return Err(Error::Input("optimizer needs at least one record".into()));
    }
    let grid = CandidateGrid::from_records(records)?;
    let t = &grid.thresholds;
    let mut best: Option<Candidate> = None;
    for a in 0..t.len() {
        for b in a..t.len() {
            let params = PolicyParams { k_l: t[a], k_h: t[b] };
            let o = policy::evaluate(records, params)?;
            let feasible = match rule {
                Rule::Reduction => o.delta_buti >= slack,
                Rule::Buti => o.delta_rho <= -slack,
            };
            if !feasible {
                continue;
            }
            let key = match rule {
                Rule::Reduction => (o.delta_rho, -o.delta_buti, o.changed),
                Rule::Buti => (-o.delta_buti, o.delta_rho, o.changed),
            };
            let better = match &best {
                None => true,
                Some((k, ..)) => key < *k,
            };
            if better {
                best = Some((key, a, b, o));
            }
        }
    }
    let (_, a, b, outcome) = best.ok_or_else(|| Error::Input(format!("no candidate pair satisfies slack {slack}")))?;
    Ok(OptimizerResult::from_outcome(rule, PolicyParams { k_l: t[a], k_h: t[b] }, (a, b), outcome, slack))
}
