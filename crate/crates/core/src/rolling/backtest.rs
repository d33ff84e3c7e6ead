use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use super::bootstrap::{resample_weights, weighted_counts};
use super::{aggregate, skipped_report, window_report, RuleRun, Schedule, Variant};
use crate::cohort::{split_windows, Cohort, Window};
use crate::error::{Error, Result};
use crate::forest::{Dataset, ForestParams, RiskModel};
use crate::optimizer::{conservative_params, optimize, Rule};
use crate::policy::{apply_rule, exempt_decision, OutcomeCounts, PolicyParams, PolicyRecord};
use crate::seed::{self, stage};

/// Out-of-sample scores from the model fitted on everything before `cutoff`.
#[derive(Debug, Clone)]
struct Scored {
    /// Cohort index of `scores[0]`.
    start: usize,
    scores: Vec<f64>,
}

/// A cohort scored by forests refitted at every cutoff the rolling
/// evaluations need.
#[derive(Debug, Clone)]
pub struct Backtest<'a> {
    pub cohort: &'a Cohort,
    pub schedule: Schedule,
    pub windows: Vec<Window>,
    scores: BTreeMap<u32, Scored>,
    clinic_index: Vec<u32>,
}

/// Thresholds used on one ex-ante application slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceParams {
    pub rule: Rule,
    pub start_day: u32,
    pub end_day: u32,
    pub k_l: f64,
    pub k_h: f64,
    pub slack: i64,
    /// Ex-post optimum on the preceding evaluation period.
    pub expost_objective: i64,
    /// Objective reached at the chosen slack on that period.
    pub target_objective: i64,
    /// The evaluation period had no usable records; the identity rule was applied.
    pub fallback: bool,
}

/// Share of high-risk untreated patients prescribed after the test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FollowupSummary {
    pub qualifying: usize,
    pub followed: usize,
    pub share: Option<f64>,
}

impl<'a> Backtest<'a> {
    /// Fit and score every cutoff: each window start and, with `exante`, the
    /// start of the evaluation period before every application slice.
    pub fn prepare(cohort: &'a Cohort, schedule: &Schedule, forest: &ForestParams, exante: bool) -> Result<Self> {
        forest.validate()?;
        let windows = split_windows(cohort, schedule)?;
        let mut cutoffs: BTreeSet<u32> = windows.iter().map(|w| w.eval_start).collect();
        if exante {
            cutoffs.extend(exante_slices(schedule, &windows).iter().map(|s| s.start - schedule.tau_days));
        }
        let horizon = cohort.meta.horizon_days;
        let span = schedule.tau_days + schedule.lambda_days;
        let cutoffs: Vec<u32> = cutoffs.into_iter().collect();
        let scored: Vec<(u32, Scored)> = cutoffs
            .par_iter()
            .map(|&cutoff| {
                let start = cohort.lower_bound(cutoff);
                let end = cohort.lower_bound(cutoff.saturating_add(span).min(horizon));
                let scores = if start == end {
                    Vec::new()
                } else {
                    score_at(cohort, schedule, forest, cutoff, start..end)
                        .map_err(|e| e.context(format!("fitting the model for cutoff day {cutoff}")))?
                };
                Ok((cutoff, Scored { start, scores }))
            })
            .collect::<Result<_>>()?;

        let ids: BTreeMap<&str, u32> = cohort
            .consultations
            .iter()
            .map(|c| c.clinic_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, i as u32))
            .collect();
        let clinic_index = cohort.consultations.iter().map(|c| ids[c.clinic_id.as_str()]).collect();
        Ok(Backtest {
            cohort,
            schedule: schedule.clone(),
            windows,
            scores: scored.into_iter().collect(),
            clinic_index,
        })
    }

    /// Scores for cohort indices `range` from the model fitted at `cutoff`.
    pub fn scores(&self, cutoff: u32, range: Range<usize>) -> Result<&[f64]> {
        let s = self
            .scores
            .get(&cutoff)
            .ok_or_else(|| Error::Invariant(format!("no model was fitted for cutoff day {cutoff}")))?;
        if range.is_empty() {
            return Ok(&[]);
        }
        if range.start < s.start || range.end > s.start + s.scores.len() {
            return Err(Error::Invariant(format!("records {range:?} were not scored at cutoff day {cutoff}")));
        }
        Ok(&s.scores[range.start - s.start..range.end - s.start])
    }

    pub fn records(&self, cutoff: u32, range: Range<usize>) -> Result<Vec<PolicyRecord>> {
        let scores = self.scores(cutoff, range.clone())?;
        Ok(self.cohort.consultations[range]
            .iter()
            .zip(scores)
            .map(|(c, &m)| PolicyRecord { m, rho_j: c.rho_j, y: c.y, pregnant: c.pregnant })
            .collect())
    }

    /// Evaluation records of a window, scored by that window's model.
    pub fn window_records(&self, w: &Window) -> Result<Vec<PolicyRecord>> {
        self.records(w.eval_start, w.eval.clone())
    }

    /// `(cohort index, out-of-sample score)` over all windows, in day order.
    pub fn pooled_scores(&self) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        for w in &self.windows {
            let s = self.scores(w.eval_start, w.eval.clone())?;
            out.extend(w.eval.clone().zip(s.iter().copied()));
        }
        Ok(out)
    }

    pub(crate) fn replicates(&self, range: Range<usize>, tags: &[u64]) -> Vec<Vec<u32>> {
        let clusters = self
            .schedule
            .cluster_bootstrap
            .then(|| dense(&self.clinic_index[range.clone()]));
        resample_weights(range.len(), self.schedule.bootstrap, self.schedule.seed, tags, clusters.as_deref())
    }

    /// Application slices of the ex-ante evaluation.
    pub fn exante_slices(&self) -> Vec<Range<u32>> {
        exante_slices(&self.schedule, &self.windows).into_iter().map(|s| s.start..s.end).collect()
    }

    /// Follow-up share using each window's ex-post `k_h` from `run`.
    pub fn followup(&self, run: &RuleRun) -> Result<FollowupSummary> {
        let (mut qualifying, mut followed) = (0, 0);
        for (w, report) in self.windows.iter().zip(&run.windows) {
            let Some(k_h) = report.k_h else { continue };
            let scores = self.scores(w.eval_start, w.eval.clone())?;
            for (c, &m) in self.cohort.consultations[w.eval.clone()].iter().zip(scores) {
                if m > k_h && !c.rho_j {
                    qualifying += 1;
                    followed += c.post_test_rx as usize;
                }
            }
        }
        Ok(FollowupSummary {
            qualifying,
            followed,
            share: (qualifying > 0).then(|| followed as f64 / qualifying as f64),
        })
    }
}

/// Forest fitted on the training history available at `cutoff`.
pub fn fit_at(cohort: &Cohort, schedule: &Schedule, forest: &ForestParams, cutoff: u32) -> Result<RiskModel> {
    let train_from = schedule
        .train_days
        .map_or(0, |len| cohort.lower_bound(cutoff.saturating_sub(len)));
    let train = &cohort.consultations[train_from..cohort.lower_bound(cutoff)];
    if train.is_empty() {
        return Err(Error::Input(format!("no training data before day {cutoff}")));
    }
    let data = Dataset::from_consultations(train)?;
    let params = forest.with_seed(seed::derive(forest.seed, &[stage::FOREST, cutoff as u64]));
    log::debug!("cutoff {cutoff}: fitting on {} consultations", train.len());
    RiskModel::fit(&data, &params)
}

fn score_at(cohort: &Cohort, schedule: &Schedule, forest: &ForestParams, cutoff: u32, range: Range<usize>) -> Result<Vec<f64>> {
    fit_at(cohort, schedule, forest, cutoff)?.predict_consultations(&cohort.consultations[range])
}

fn exante_slices(schedule: &Schedule, windows: &[Window]) -> Vec<Range<u32>> {
    let (Some(first), Some(last)) = (windows.first(), windows.last()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut u = first.eval_start + schedule.tau_days;
    while u < last.eval_end {
        out.push(u..(u + schedule.lambda_days).min(last.eval_end));
        u += schedule.lambda_days;
    }
    out
}

fn dense(ids: &[u32]) -> Vec<u32> {
    let mut map = BTreeMap::new();
    for &id in ids {
        let next = map.len() as u32;
        map.entry(id).or_insert(next);
    }
    ids.iter().map(|id| map[id]).collect()
}

fn decide(r: &PolicyRecord, params: PolicyParams, variant: Variant) -> bool {
    match variant {
        Variant::Standard => apply_rule(r.m, r.rho_j, params),
        Variant::ExemptPregnant => exempt_decision(r, params),
    }
}

/// Records the optimizer sees: all, or the non-pregnant ones when exempt.
fn optimizer_sample(records: &[PolicyRecord], variant: Variant) -> Vec<PolicyRecord> {
    match variant {
        Variant::Standard => records.to_vec(),
        Variant::ExemptPregnant => records.iter().copied().filter(|r| !r.pregnant).collect(),
    }
}

type WindowResult = (super::WindowReport, OutcomeCounts, Vec<OutcomeCounts>);

/// Thresholds optimized on each window itself, then bootstrapped with the
/// thresholds held fixed.
pub fn run_expost(bt: &Backtest<'_>, rule: Rule, variant: Variant) -> Result<RuleRun> {
    let options = bt.schedule.optimizer_options();
    let results: Vec<WindowResult> = bt
        .windows
        .par_iter()
        .map(|w| -> Result<WindowResult> {
            let records = bt.window_records(w)?;
            let sample = optimizer_sample(&records, variant);
            if sample.is_empty() {
                return Ok((skipped_report(w, rule), OutcomeCounts::default(), Vec::new()));
            }
            let best = optimize(&sample, rule, &options).map_err(|e| e.context(format!("window {} ex post", w.id)))?;
            let decisions: Vec<bool> = records.iter().map(|r| decide(r, best.params, variant)).collect();
            let weights = bt.replicates(w.eval.clone(), &[stage::BOOTSTRAP, stage::EXPOST, w.id as u64]);
            let point = weighted_counts(&records, &decisions, &vec![1; records.len()]);
            let reps: Vec<OutcomeCounts> = weights.iter().map(|wt| weighted_counts(&records, &decisions, wt)).collect();
            let report = window_report(w, rule, Some((best.params.k_l, best.params.k_h)), 1, &point, &reps);
            Ok((report, point, reps))
        })
        .collect::<Result<_>>()?;
    Ok(assemble(rule, variant, results, Vec::new()))
}

/// Conservative thresholds from the preceding period, refreshed every
/// `lambda_days` and applied forward; reported per window from the second on.
pub fn run_exante(bt: &Backtest<'_>, rule: Rule, variant: Variant) -> Result<RuleRun> {
    let s = &bt.schedule;
    let options = s.optimizer_options();
    let cohort = bt.cohort;
    let slices: Vec<(SliceParams, Range<usize>, Vec<bool>)> = bt
        .exante_slices()
        .par_iter()
        .map(|slice| -> Result<_> {
            let cutoff = slice.start - s.tau_days;
            let eval = bt.records(cutoff, cohort.lower_bound(cutoff)..cohort.lower_bound(slice.start))?;
            let sample = optimizer_sample(&eval, variant);
            let (params, slack, expost_objective, target_objective, fallback) = if sample.is_empty() {
                log::warn!("no records in days {cutoff}..{}; applying the identity rule", slice.start);
                (PolicyParams::IDENTITY, 0, 0, 0, true)
            } else {
                let c = conservative_params(&sample, s.alpha, rule, &options)
                    .map_err(|e| e.context(format!("ex ante slice starting day {}", slice.start)))?;
                (c.params(), c.slack, c.expost.objective_value, c.result.objective_value, false)
            };
            let range = cohort.lower_bound(slice.start)..cohort.lower_bound(slice.end);
            let applied = bt.records(cutoff, range.clone())?;
            let decisions = applied.iter().map(|r| decide(r, params, variant)).collect();
            let sp = SliceParams {
                rule,
                start_day: slice.start,
                end_day: slice.end,
                k_l: params.k_l,
                k_h: params.k_h,
                slack,
                expost_objective,
                target_objective,
                fallback,
            };
            Ok((sp, range, decisions))
        })
        .collect::<Result<_>>()?;

    let mut decision = vec![None; cohort.len()];
    let mut slice_of = vec![usize::MAX; cohort.len()];
    for (k, (_, range, ds)) in slices.iter().enumerate() {
        for (i, &d) in range.clone().zip(ds) {
            decision[i] = Some(d);
            slice_of[i] = k;
        }
    }

    let results: Vec<WindowResult> = bt.windows[1..]
        .par_iter()
        .map(|w| -> Result<WindowResult> {
            if w.is_empty() {
                return Ok((skipped_report(w, rule), OutcomeCounts::default(), Vec::new()));
            }
            let mut records = Vec::with_capacity(w.eval.len());
            let mut decisions = Vec::with_capacity(w.eval.len());
            for i in w.eval.clone() {
                let c = &cohort.consultations[i];
                let d = decision[i].ok_or_else(|| {
                    Error::Invariant(format!("consultation {} in window {} has no ex ante decision", c.patient_id, w.id))
                })?;
                records.push(PolicyRecord { m: f64::NAN, rho_j: c.rho_j, y: c.y, pregnant: c.pregnant });
                decisions.push(d);
            }
            let used: BTreeSet<usize> = w.eval.clone().map(|i| slice_of[i]).collect();
            let distinct: BTreeSet<(u64, u64)> = used
                .iter()
                .map(|&k| (slices[k].0.k_l.to_bits(), slices[k].0.k_h.to_bits()))
                .collect();
            let params = match distinct.iter().next() {
                Some(&(l, h)) if distinct.len() == 1 => Some((f64::from_bits(l), f64::from_bits(h))),
                _ => None,
            };
            let weights = bt.replicates(w.eval.clone(), &[stage::BOOTSTRAP, stage::EXANTE, w.id as u64]);
            let point = weighted_counts(&records, &decisions, &vec![1; records.len()]);
            let reps: Vec<OutcomeCounts> = weights.iter().map(|wt| weighted_counts(&records, &decisions, wt)).collect();
            Ok((window_report(w, rule, params, used.len(), &point, &reps), point, reps))
        })
        .collect::<Result<_>>()?;
    Ok(assemble(rule, variant, results, slices.into_iter().map(|s| s.0).collect()))
}

fn assemble(rule: Rule, variant: Variant, results: Vec<WindowResult>, slices: Vec<SliceParams>) -> RuleRun {
    let mut windows = Vec::with_capacity(results.len());
    let mut points = Vec::new();
    let mut reps = Vec::new();
    for (report, point, rep) in results {
        if !report.skipped {
            points.push(point);
            reps.push(rep);
        }
        windows.push(report);
    }
    let aggregate = aggregate(rule, &windows, &points, &reps);
    RuleRun { rule, variant, windows, aggregate, slices }
}
