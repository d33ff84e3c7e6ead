//! Report files: window tables, pooled aggregates and diagnostics exports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cohort::finish_csv;
use crate::error::{Error, Result};
use crate::metrics::{CalibrationBin, ClinicRate, HistogramBin, OlsResult, RocResult};
use crate::policy::{payoff_gain, Preferences};
use crate::rolling::{Aggregate, FollowupSummary, RuleRun, SweepPoint, WindowReport};

pub const AGGREGATE_SCHEMA_VERSION: u32 = 1;

/// Write `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// CSV with a header taken from `T`'s field names.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    finish_csv(w)
}

/// CSV with an explicit header, for tables that may be empty.
fn csv_with_header<T: Serialize>(header: &[&str], rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    finish_csv(w)
}

#[derive(Serialize)]
struct WindowRow {
    pipeline: &'static str,
    variant: &'static str,
    rule: &'static str,
    window_id: usize,
    eval_start: u32,
    eval_end: u32,
    skipped: bool,
    k_l: Option<f64>,
    k_h: Option<f64>,
    n_slices: usize,
    n: usize,
    observed_rx: usize,
    observed_treated_buti: usize,
    delta_rho: i64,
    delta_buti: i64,
    changed: usize,
    pct_delta_rho: Option<f64>,
    pct_delta_buti: Option<f64>,
    objective_pct: Option<f64>,
    objective_ci_lo: Option<f64>,
    objective_ci_hi: Option<f64>,
    constraint_pct: Option<f64>,
    constraint_ci_lo: Option<f64>,
    constraint_ci_hi: Option<f64>,
    excluded_objective: usize,
    excluded_constraint: usize,
    constraint_violated: bool,
    payoff_gain: f64,
}

const WINDOW_HEADER: [&str; 28] = [
    "pipeline", "variant", "rule", "window_id", "eval_start", "eval_end", "skipped", "k_l", "k_h",
    "n_slices", "n", "observed_rx", "observed_treated_buti", "delta_rho", "delta_buti", "changed",
    "pct_delta_rho", "pct_delta_buti", "objective_pct", "objective_ci_lo", "objective_ci_hi",
    "constraint_pct", "constraint_ci_lo", "constraint_ci_hi", "excluded_objective",
    "excluded_constraint", "constraint_violated", "payoff_gain",
];

fn window_row(pipeline: &'static str, run: &RuleRun, w: &WindowReport, prefs: Preferences) -> WindowRow {
    let o = &w.outcome;
    WindowRow {
        pipeline,
        variant: run.variant.name(),
        rule: run.rule.name(),
        window_id: w.window_id,
        eval_start: w.eval_start,
        eval_end: w.eval_end,
        skipped: w.skipped,
        k_l: w.k_l,
        k_h: w.k_h,
        n_slices: w.n_slices,
        n: o.n,
        observed_rx: o.observed_rx,
        observed_treated_buti: o.observed_treated_buti,
        delta_rho: o.delta_rho,
        delta_buti: o.delta_buti,
        changed: o.changed,
        pct_delta_rho: o.pct_delta_rho,
        pct_delta_buti: o.pct_delta_buti,
        objective_pct: w.objective_pct,
        objective_ci_lo: w.objective_ci.map(|c| c.lo),
        objective_ci_hi: w.objective_ci.map(|c| c.hi),
        constraint_pct: w.constraint_pct,
        constraint_ci_lo: w.constraint_ci.map(|c| c.lo),
        constraint_ci_hi: w.constraint_ci.map(|c| c.hi),
        excluded_objective: w.excluded_objective,
        excluded_constraint: w.excluded_constraint,
        constraint_violated: w.constraint_violated,
        payoff_gain: payoff_gain(o, prefs),
    }
}

/// One row per window of every run in `runs`.
pub fn windows_csv(pipeline: &'static str, runs: &[&RuleRun], prefs: Preferences) -> Result<String> {
    let rows: Vec<WindowRow> = runs
        .iter()
        .flat_map(|run| run.windows.iter().map(move |w| window_row(pipeline, run, w, prefs)))
        .collect();
    csv_with_header(&WINDOW_HEADER, &rows)
}

#[derive(Serialize)]
struct ConstraintRow {
    pipeline: &'static str,
    variant: &'static str,
    rule: &'static str,
    window_id: usize,
    constraint_pct: Option<f64>,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    covers_zero: Option<bool>,
}

/// Constraint point estimates and intervals per window.
pub fn constraint_csv(runs: &[(&'static str, &RuleRun)]) -> Result<String> {
    let rows: Vec<ConstraintRow> = runs
        .iter()
        .flat_map(|(pipeline, run)| {
            run.windows.iter().filter(|w| !w.skipped).map(move |w| ConstraintRow {
                pipeline,
                variant: run.variant.name(),
                rule: run.rule.name(),
                window_id: w.window_id,
                constraint_pct: w.constraint_pct,
                ci_lo: w.constraint_ci.map(|c| c.lo),
                ci_hi: w.constraint_ci.map(|c| c.hi),
                covers_zero: w.constraint_ci_covers_zero(),
            })
        })
        .collect();
    csv_with_header(
        &["pipeline", "variant", "rule", "window_id", "constraint_pct", "ci_lo", "ci_hi", "covers_zero"],
        &rows,
    )
}

/// Thresholds per ex-ante application slice.
pub fn slices_csv(runs: &[&RuleRun]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variant", "rule", "start_day", "end_day", "k_l", "k_h", "slack", "expost_objective",
        "target_objective", "fallback",
    ])?;
    for run in runs {
        for s in &run.slices {
            w.write_record([
                run.variant.name().to_string(),
                s.rule.name().to_string(),
                s.start_day.to_string(),
                s.end_day.to_string(),
                s.k_l.to_string(),
                s.k_h.to_string(),
                s.slack.to_string(),
                s.expost_objective.to_string(),
                s.target_objective.to_string(),
                s.fallback.to_string(),
            ])?;
        }
    }
    finish_csv(w)
}

/// JSON rows with thresholds, counts, deltas, percentages and flags.
pub fn policy_rows_jsonl(runs: &[(&'static str, &RuleRun)]) -> Result<String> {
    #[derive(Serialize)]
    struct Counts {
        n: usize,
        observed_rx: usize,
        observed_treated_buti: usize,
        changed: usize,
    }
    #[derive(Serialize)]
    struct Deltas {
        delta_rho: i64,
        delta_buti: i64,
    }
    #[derive(Serialize)]
    struct Percentages {
        pct_delta_rho: Option<f64>,
        pct_delta_buti: Option<f64>,
    }
    #[derive(Serialize)]
    struct Flags {
        skipped: bool,
        constraint_violated: bool,
        pct_delta_rho_undefined: bool,
        pct_delta_buti_undefined: bool,
    }
    #[derive(Serialize)]
    struct Row {
        pipeline: &'static str,
        variant: &'static str,
        rule: &'static str,
        window_id: usize,
        #[serde(rename = "k_L")]
        k_l: Option<f64>,
        #[serde(rename = "k_H")]
        k_h: Option<f64>,
        counts: Counts,
        deltas: Deltas,
        percentages: Percentages,
        flags: Flags,
    }
    let mut out = String::new();
    for (pipeline, run) in runs {
        for w in &run.windows {
            let o = &w.outcome;
            let row = Row {
                pipeline,
                variant: run.variant.name(),
                rule: run.rule.name(),
                window_id: w.window_id,
                k_l: w.k_l,
                k_h: w.k_h,
                counts: Counts {
                    n: o.n,
                    observed_rx: o.observed_rx,
                    observed_treated_buti: o.observed_treated_buti,
                    changed: o.changed,
                },
                deltas: Deltas { delta_rho: o.delta_rho, delta_buti: o.delta_buti },
                percentages: Percentages { pct_delta_rho: o.pct_delta_rho, pct_delta_buti: o.pct_delta_buti },
                flags: Flags {
                    skipped: w.skipped,
                    constraint_violated: w.constraint_violated,
                    pct_delta_rho_undefined: o.pct_delta_rho.is_none(),
                    pct_delta_buti_undefined: o.pct_delta_buti.is_none(),
                },
            };
            out.push_str(&serde_json::to_string(&row)?);
            out.push('\n');
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct CurveRow {
    k: f64,
    windows: usize,
    mean_pct_delta_rho: Option<f64>,
    mean_pct_delta_buti: Option<f64>,
    rho_ci_lo: Option<f64>,
    rho_ci_hi: Option<f64>,
    buti_ci_lo: Option<f64>,
    buti_ci_hi: Option<f64>,
}

pub fn curve_csv(points: &[SweepPoint]) -> Result<String> {
    let rows: Vec<CurveRow> = points
        .iter()
        .map(|p| CurveRow {
            k: p.k,
            windows: p.windows,
            mean_pct_delta_rho: p.mean_pct_delta_rho,
            mean_pct_delta_buti: p.mean_pct_delta_buti,
            rho_ci_lo: p.rho_ci.map(|c| c.lo),
            rho_ci_hi: p.rho_ci.map(|c| c.hi),
            buti_ci_lo: p.buti_ci.map(|c| c.lo),
            buti_ci_hi: p.buti_ci.map(|c| c.hi),
        })
        .collect();
    csv_with_header(
        &["k", "windows", "mean_pct_delta_rho", "mean_pct_delta_buti", "rho_ci_lo", "rho_ci_hi", "buti_ci_lo", "buti_ci_hi"],
        &rows,
    )
}

/// Point estimate with its interval.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub point: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateEntry {
    pub rule: &'static str,
    pub variant: &'static str,
    pub windows: usize,
    pub windows_skipped: usize,
    pub n: usize,
    pub observed_rx: usize,
    pub observed_treated_buti: usize,
    pub delta_rho: i64,
    pub delta_buti: i64,
    pub pct_delta_rho: Option<f64>,
    pub pct_delta_buti: Option<f64>,
    pub objective: Estimate,
    pub constraint: Estimate,
    pub constraint_ci_cover_zero: usize,
    pub constraint_ci_violated: usize,
    pub payoff_gain: f64,
}

impl AggregateEntry {
    pub fn new(run: &RuleRun, prefs: Preferences) -> Self {
        let a: &Aggregate = &run.aggregate;
        let o = &a.outcome;
        AggregateEntry {
            rule: run.rule.name(),
            variant: run.variant.name(),
            windows: a.windows,
            windows_skipped: a.windows_skipped,
            n: o.n,
            observed_rx: o.observed_rx,
            observed_treated_buti: o.observed_treated_buti,
            delta_rho: o.delta_rho,
            delta_buti: o.delta_buti,
            pct_delta_rho: o.pct_delta_rho,
            pct_delta_buti: o.pct_delta_buti,
            objective: Estimate {
                point: a.objective_pct,
                ci_lo: a.objective_ci.map(|c| c.lo),
                ci_hi: a.objective_ci.map(|c| c.hi),
            },
            constraint: Estimate {
                point: a.constraint_pct,
                ci_lo: a.constraint_ci.map(|c| c.lo),
                ci_hi: a.constraint_ci.map(|c| c.hi),
            },
            constraint_ci_cover_zero: a.constraint_ci_cover_zero,
            constraint_ci_violated: a.constraint_ci_violated,
            payoff_gain: payoff_gain(o, prefs),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CohortSummary {
    pub n: usize,
    pub n_features: usize,
    pub horizon_days: u32,
    pub positive_rate: f64,
    pub prescription_rate: f64,
    pub pregnant_share: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MachineOnlySummary {
    pub k_zero: Option<SweepPoint>,
    pub k_never: Option<SweepPoint>,
    /// Thresholds that lower prescriptions and raise treated positives at once.
    pub dominating_k: Vec<f64>,
}

impl MachineOnlySummary {
    pub fn new(points: &[SweepPoint]) -> Self {
        MachineOnlySummary {
            k_zero: points.iter().find(|p| p.k == 0.0).cloned(),
            k_never: points.iter().find(|p| p.k > 1.0).cloned(),
            dominating_k: points
                .iter()
                .filter(|p| {
                    p.mean_pct_delta_rho.is_some_and(|v| v < 0.0) && p.mean_pct_delta_buti.is_some_and(|v| v > 0.0)
                })
                .map(|p| p.k)
                .collect(),
        }
    }
}

/// Contents of `aggregate.json`.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub seed: u64,
    pub alpha: f64,
    pub bootstrap: usize,
    pub payoff_a: f64,
    pub payoff_b: f64,
    pub cohort: CohortSummary,
    /// Pooled out-of-sample AUC over the evaluation windows.
    pub auc: Option<f64>,
    pub expost: Vec<AggregateEntry>,
    pub exante: Vec<AggregateEntry>,
    pub exante_exempt_pregnant: Vec<AggregateEntry>,
    pub followup: Option<FollowupSummary>,
    pub machine_only: Option<MachineOnlySummary>,
}

pub fn roc_csv(roc: &RocResult) -> Result<String> {
    #[derive(Serialize)]
    struct Row {
        false_positive_rate: f64,
        true_positive_rate: f64,
        threshold: Option<f64>,
    }
    let rows: Vec<Row> = roc
        .points
        .iter()
        .enumerate()
        .map(|(i, &(fpr, tpr))| Row {
            false_positive_rate: fpr,
            true_positive_rate: tpr,
            threshold: i.checked_sub(1).map(|j| roc.thresholds[j]),
        })
        .collect();
    csv_with_header(&["false_positive_rate", "true_positive_rate", "threshold"], &rows)
}

pub fn calibration_csv(bins: &[CalibrationBin]) -> Result<String> {
    csv_with_header(&["mean_predicted_risk", "mean_outcome", "bin_size"], bins)
}

/// Clinic rate table without clinics below `min_size` consultations.
pub fn clinic_rates_csv(rates: &[ClinicRate], min_size: usize) -> Result<String> {
    let kept: Vec<&ClinicRate> = rates.iter().filter(|r| r.n >= min_size).collect();
    csv_with_header(&["clinic_id", "n", "rx_rate_pos", "rx_rate_neg"], &kept)
}

pub fn histogram_csv(bins: &[HistogramBin]) -> Result<String> {
    csv_with_header(&["lo", "hi", "count"], bins)
}

pub fn ols_csv(fit: &OlsResult) -> Result<String> {
    #[derive(Serialize)]
    struct Row<'a> {
        term: &'a str,
        coef: f64,
        se: f64,
        ci_lo: f64,
        ci_hi: f64,
        n: usize,
    }
    let rows: Vec<Row> = (0..fit.names.len())
        .map(|j| Row {
            term: &fit.names[j],
            coef: fit.coef[j],
            se: fit.se[j],
            ci_lo: fit.ci_lo[j],
            ci_hi: fit.ci_hi[j],
            n: fit.n,
        })
        .collect();
    csv_with_header(&["term", "coef", "se", "ci_lo", "ci_hi", "n"], &rows)
}

pub fn importance_csv(importance: &[f64]) -> Result<String> {
    #[derive(Serialize)]
    struct Row {
        feature: String,
        importance: f64,
    }
    let rows: Vec<Row> = importance
        .iter()
        .enumerate()
        .map(|(j, &v)| Row { feature: format!("x{j}"), importance: v })
        .collect();
    csv_with_header(&["feature", "importance"], &rows)
}
