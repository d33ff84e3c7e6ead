//! Rolling ex-post and ex-ante evaluation, bootstrap intervals and the
//! machine-only threshold sweep.

mod backtest;
mod bootstrap;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{OptimizerOptions, Rule};
use crate::policy::{OutcomeCounts, PolicyOutcome};

pub use backtest::{fit_at, run_exante, run_expost, Backtest, FollowupSummary, SliceParams};
pub use bootstrap::{bootstrap_ci, percentile_interval, resample_weights, BootstrapCi, Replicates};
pub use sweep::{default_k_grid, machine_only_sweep, SweepPoint, NEVER_K};

/// Rolling evaluation calendar and resampling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    /// First day of the first evaluation window.
    pub eval_start_day: u32,
    /// `None` fits as many windows as the horizon allows.
    pub n_windows: Option<usize>,
    pub tau_days: u32,
    pub lambda_days: u32,
    pub alpha: f64,
    pub bootstrap: usize,
    /// Train on this many days before each cutoff instead of all history.
    pub train_days: Option<u32>,
    /// Resample clinics instead of consultations.
    pub cluster_bootstrap: bool,
    /// Cap on the optimizer grid (see [`OptimizerOptions::max_grid`]).
    pub max_grid: Option<usize>,
    /// Filled from the run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            eval_start_day: 360,
            n_windows: None,
            tau_days: 30,
            lambda_days: 7,
            alpha: 0.8,
            bootstrap: 100,
            train_days: None,
            cluster_bootstrap: false,
            max_grid: None,
            seed: 0,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_days == 0 {
            return Err(Error::config("lambda_days", "must be at least 1"));
        }
        if self.tau_days < self.lambda_days {
            return Err(Error::config(
                "tau_days",
                format!("{} is shorter than lambda_days {}", self.tau_days, self.lambda_days),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("alpha", format!("must lie in (0, 1], got {}", self.alpha)));
        }
        if self.bootstrap < 2 {
            return Err(Error::config("bootstrap", "needs at least 2 resamples"));
        }
        if self.n_windows == Some(0) {
            return Err(Error::config("n_windows", "must be at least 1"));
        }
        if self.train_days == Some(0) {
            return Err(Error::config("train_days", "must be at least 1"));
        }
        if self.max_grid == Some(0) {
            return Err(Error::config("max_grid", "must be at least 1"));
        }
        Ok(())
    }

    pub fn window_count(&self, horizon_days: u32) -> usize {
        self.n_windows.unwrap_or_else(|| {
            (horizon_days.saturating_sub(self.eval_start_day) / self.tau_days.max(1)) as usize
        })
    }

    pub fn optimizer_options(&self) -> OptimizerOptions {
        OptimizerOptions { max_grid: self.max_grid }
    }
}

/// Percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Whether pregnant patients keep the physician's decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    ExemptPregnant,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::ExemptPregnant => "exempt_pregnant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub window_id: usize,
    pub eval_start: u32,
    pub eval_end: u32,
    pub rule: Rule,
    /// Thresholds applied to the whole window; `None` when they changed
    /// within the window or the window was skipped.
    pub k_l: Option<f64>,
    pub k_h: Option<f64>,
    pub n_slices: usize,
    pub outcome: PolicyOutcome,
    pub objective_pct: Option<f64>,
    pub objective_ci: Option<Interval>,
    pub constraint_pct: Option<f64>,
    pub constraint_ci: Option<Interval>,
    /// Resamples dropped because the percentage was undefined.
    pub excluded_objective: usize,
    pub excluded_constraint: usize,
    /// The constraint fails on the window sample itself.
    pub constraint_violated: bool,
    pub skipped: bool,
}

impl WindowReport {
    pub fn constraint_ci_covers_zero(&self) -> Option<bool> {
        self.constraint_ci.map(|ci| ci.contains(0.0))
    }
}

/// Pooled outcome over every non-skipped window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub rule: Rule,
    pub windows: usize,
    pub windows_skipped: usize,
    pub outcome: PolicyOutcome,
    pub objective_pct: Option<f64>,
    pub objective_ci: Option<Interval>,
    pub constraint_pct: Option<f64>,
    pub constraint_ci: Option<Interval>,
    /// Windows whose constraint interval contains zero.
    pub constraint_ci_cover_zero: usize,
    /// Windows whose constraint interval lies entirely on the violating side.
    pub constraint_ci_violated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleRun {
    pub rule: Rule,
    pub variant: Variant,
    pub windows: Vec<WindowReport>,
    pub aggregate: Aggregate,
    /// Ex-ante only: parameters per application slice.
    pub slices: Vec<SliceParams>,
}

/// Builds a window report from point counts and bootstrap replicates.
pub(crate) fn window_report(
    window: &crate::cohort::Window,
    rule: Rule,
    params: Option<(f64, f64)>,
    n_slices: usize,
    point: &OutcomeCounts,
    replicates: &[OutcomeCounts],
) -> WindowReport {
    let outcome = point.outcome();
    let ci = BootstrapCi::from_replicates(replicates);
    let (objective_ci, excluded_objective, constraint_ci, excluded_constraint) = match rule {
        Rule::Reduction => (ci.pct_delta_rho, ci.excluded_rho, ci.pct_delta_buti, ci.excluded_buti),
        Rule::Buti => (ci.pct_delta_buti, ci.excluded_buti, ci.pct_delta_rho, ci.excluded_rho),
    };
    WindowReport {
        window_id: window.id,
        eval_start: window.eval_start,
        eval_end: window.eval_end,
        rule,
        k_l: params.map(|p| p.0),
        k_h: params.map(|p| p.1),
        n_slices,
        objective_pct: rule.objective_pct(&outcome),
        constraint_pct: rule.constraint_pct(&outcome),
        constraint_violated: !rule.satisfied(&outcome, 0),
        outcome,
        objective_ci,
        constraint_ci,
        excluded_objective,
        excluded_constraint,
        skipped: false,
    }
}

pub(crate) fn skipped_report(window: &crate::cohort::Window, rule: Rule) -> WindowReport {
    let outcome = OutcomeCounts::default().outcome();
    WindowReport {
        window_id: window.id,
        eval_start: window.eval_start,
        eval_end: window.eval_end,
        rule,
        k_l: None,
        k_h: None,
        n_slices: 0,
        outcome,
        objective_pct: None,
        objective_ci: None,
        constraint_pct: None,
        constraint_ci: None,
        excluded_objective: 0,
        excluded_constraint: 0,
        constraint_violated: false,
        skipped: true,
    }
}

/// Pools window counts; the interval sums replicate counts across windows.
pub(crate) fn aggregate(
    rule: Rule,
    reports: &[WindowReport],
    points: &[OutcomeCounts],
    replicates: &[Vec<OutcomeCounts>],
) -> Aggregate {
    let mut pooled = OutcomeCounts::default();
    for p in points {
        pooled.merge(p);
    }
    let n_reps = replicates.iter().map(Vec::len).max().unwrap_or(0);
    let pooled_reps: Vec<OutcomeCounts> = (0..n_reps)
        .map(|r| {
            let mut c = OutcomeCounts::default();
            for w in replicates {
                c.merge(&w[r]);
            }
            c
        })
        .collect();
    let ci = BootstrapCi::from_replicates(&pooled_reps);
    let outcome = pooled.outcome();
    let (objective_ci, constraint_ci) = match rule {
        Rule::Reduction => (ci.pct_delta_rho, ci.pct_delta_buti),
        Rule::Buti => (ci.pct_delta_buti, ci.pct_delta_rho),
    };
    let used: Vec<&WindowReport> = reports.iter().filter(|r| !r.skipped).collect();
    let violated = |r: &&&WindowReport| {
        r.constraint_ci.is_some_and(|ci| match rule {
            Rule::Reduction => ci.hi < 0.0,
            Rule::Buti => ci.lo > 0.0,
        })
    };
    Aggregate {
        rule,
        windows: used.len(),
        windows_skipped: reports.len() - used.len(),
        objective_pct: rule.objective_pct(&outcome),
        constraint_pct: rule.constraint_pct(&outcome),
        outcome,
        objective_ci,
        constraint_ci,
        constraint_ci_cover_zero: used.iter().filter(|r| r.constraint_ci_covers_zero() == Some(true)).count(),
        constraint_ci_violated: used.iter().filter(violated).count(),
    }
}
