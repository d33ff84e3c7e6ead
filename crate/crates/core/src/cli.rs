//! Command-line front end: `generate`, `run`, `diagnose` and `sweep`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::cohort::{generate, ingest_clinics_csv, ingest_csv, Cohort};
use crate::config::{RuleSelection, RunConfig};
use crate::error::{Error, Result};
use crate::forest::{permutation_importance, Dataset};
use crate::metrics::{
    calibration_bins, clinic_rates, histogram, mean_deviation, ols_robust, roc_auc, ScoredRecord,
};
use crate::optimizer::write_trace;
use crate::report::{self, write_file, AggregateEntry, AggregateReport, CohortSummary, MachineOnlySummary};
use crate::rolling::{
    default_k_grid, fit_at, machine_only_sweep, run_exante, run_expost, Backtest, RuleRun, SweepPoint, Variant,
};

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "STEWARDSIM_LOG";

#[derive(Debug, Parser)]
#[command(name = "stewardsim", version, about = "Prediction-based antibiotic prescription policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or ingest) a cohort and write cohort.csv, clinics.csv and meta.json.
    Generate(CommonArgs),
    /// Ex-post and ex-ante rolling evaluation with the full report bundle.
    Run(CommonArgs),
    /// Risk-model and physician-behaviour diagnostics.
    Diagnose(CommonArgs),
    /// Machine-only threshold sweep.
    Sweep(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleSelection>,
    #[arg(long)]
    pub exempt_pregnant: bool,
    #[arg(long)]
    pub machine_only: bool,
    /// Worker threads. Output does not depend on this.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    /// The configuration file with command-line overrides applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(rule) = self.rule {
            config.rule = rule;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        config.variants.exempt_pregnant |= self.exempt_pregnant;
        config.variants.machine_only |= self.machine_only;
        config.validate()?;
        Ok(config)
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let args = match &cli.command {
        Command::Generate(a) | Command::Run(a) | Command::Diagnose(a) | Command::Sweep(a) => a,
    };
    if args.threads == 0 {
        return Err(Error::config("threads", "must be at least 1"));
    }
    let config = args.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Generate(_) => cmd_generate(&config).map(|_| ()),
        Command::Run(_) => cmd_run(&config).map(|_| ()),
        Command::Diagnose(_) => cmd_diagnose(&config).map(|_| ()),
        Command::Sweep(_) => cmd_sweep(&config).map(|_| ()),
    })
}

/// The configured cohort: ingested when an input file is set, generated otherwise.
pub fn load_cohort(config: &RunConfig) -> Result<Cohort> {
    match &config.input {
        Some(input) => {
            let mut cohort = ingest_csv(&input.cohort_csv, &input.columns)?;
            if let Some(path) = &input.clinics_csv {
                cohort.clinics = ingest_clinics_csv(path)?;
            }
            Ok(cohort)
        }
        None => generate(&config.cohort, config.seed),
    }
}

pub fn cmd_generate(config: &RunConfig) -> Result<Cohort> {
    let cohort = load_cohort(config)?;
    let out = &config.out;
    write_file(out, "cohort.csv", &cohort.to_csv_string()?)?;
    write_file(out, "clinics.csv", &cohort.clinics_csv_string()?)?;
    write_file(out, "meta.json", &(serde_json::to_string_pretty(&cohort.meta)? + "\n"))?;
    println!(
        "{} consultations, {} clinics; positive rate {:.3}, prescription rate {:.3}, pregnant share {:.3}",
        cohort.len(),
        cohort.clinics.len(),
        cohort.positive_rate(),
        cohort.prescription_rate(),
        cohort.pregnant_share()
    );
    Ok(cohort)
}

/// Everything `cmd_run` computed.
#[derive(Debug, Clone)]
pub struct RunBundle {
    pub expost: Vec<RuleRun>,
    pub exante: Vec<RuleRun>,
    pub exante_exempt: Vec<RuleRun>,
    pub curve: Option<Vec<SweepPoint>>,
    pub report: AggregateReport,
}

fn cohort_summary(cohort: &Cohort) -> CohortSummary {
    CohortSummary {
        n: cohort.len(),
        n_features: cohort.n_features(),
        horizon_days: cohort.meta.horizon_days,
        positive_rate: cohort.positive_rate(),
        prescription_rate: cohort.prescription_rate(),
        pregnant_share: cohort.pregnant_share(),
    }
}

pub fn cmd_run(config: &RunConfig) -> Result<RunBundle> {
    let prefs = config.preferences()?;
    let cohort = load_cohort(config)?;
    let schedule = config.effective_schedule();
    let bt = Backtest::prepare(&cohort, &schedule, &config.effective_forest(), true)?;
    let rules = config.rule.rules();

    let mut expost = Vec::new();
    let mut exante = Vec::new();
    let mut exante_exempt = Vec::new();
    for &rule in &rules {
        expost.push(run_expost(&bt, rule, Variant::Standard).map_err(|e| e.context(format!("ex post, {rule} rule")))?);
        exante.push(run_exante(&bt, rule, Variant::Standard).map_err(|e| e.context(format!("ex ante, {rule} rule")))?);
        if config.variants.exempt_pregnant {
            exante_exempt.push(
                run_exante(&bt, rule, Variant::ExemptPregnant)
                    .map_err(|e| e.context(format!("ex ante with exemption, {rule} rule")))?,
            );
        }
    }
    let followup = match expost.iter().find(|r| r.rule == crate::optimizer::Rule::Buti) {
        Some(run) => Some(bt.followup(run)?),
        None => None,
    };
    let curve = if config.variants.machine_only {
        Some(machine_only_sweep(&bt, &default_k_grid(config.sweep.k_steps))?)
    } else {
        None
    };

    let out = &config.out;
    let expost_all: Vec<&RuleRun> = expost.iter().collect();
    write_file(out, "expost_windows.csv", &report::windows_csv("expost", &expost_all, prefs)?)?;
    let exante_all: Vec<&RuleRun> = exante.iter().chain(&exante_exempt).collect();
    write_file(out, "exante_windows.csv", &report::windows_csv("exante", &exante_all, prefs)?)?;
    write_file(out, "exante_slices.csv", &report::slices_csv(&exante_all)?)?;
    let mut tagged: Vec<(&'static str, &RuleRun)> = expost.iter().map(|r| ("expost", r)).collect();
    tagged.extend(exante_all.iter().map(|r| ("exante", *r)));
    write_file(out, "constraint_windows.csv", &report::constraint_csv(&tagged)?)?;
    write_file(out, "policy_rows.jsonl", &report::policy_rows_jsonl(&tagged)?)?;
    if let Some(points) = &curve {
        write_file(out, "machine_only_curve.csv", &report::curve_csv(points)?)?;
    }
    if config.optimizer_trace {
        write_traces(config, &bt, &rules)?;
    }

    let entries = |runs: &[RuleRun]| runs.iter().map(|r| AggregateEntry::new(r, prefs)).collect::<Vec<_>>();
    let aggregate = AggregateReport {
        schema_version: report::AGGREGATE_SCHEMA_VERSION,
        seed: config.seed,
        alpha: schedule.alpha,
        bootstrap: schedule.bootstrap,
        payoff_a: prefs.a,
        payoff_b: prefs.b,
        cohort: cohort_summary(&cohort),
        auc: pooled_auc(&bt)?,
        expost: entries(&expost),
        exante: entries(&exante),
        exante_exempt_pregnant: entries(&exante_exempt),
        followup,
        machine_only: curve.as_deref().map(MachineOnlySummary::new),
    };
    write_file(out, "aggregate.json", &(serde_json::to_string_pretty(&aggregate)? + "\n"))?;
    write_file(out, "run_config.toml", &config.to_toml()?)?;

    for (label, runs) in [("ex post", &expost), ("ex ante", &exante), ("ex ante, pregnant exempt", &exante_exempt)] {
        for r in runs.iter() {
            let a = &r.aggregate;
            println!(
                "{label:<26} {:<9} objective {} {}  constraint {} {}",
                r.rule.name(),
                fmt_pct(a.objective_pct),
                fmt_ci(a.objective_ci),
                fmt_pct(a.constraint_pct),
                fmt_ci(a.constraint_ci)
            );
        }
    }
    Ok(RunBundle { expost, exante, exante_exempt, curve, report: aggregate })
}

fn pooled_auc(bt: &Backtest<'_>) -> Result<Option<f64>> {
    let pooled = bt.pooled_scores()?;
    let cs = &bt.cohort.consultations;
    let scores: Vec<f64> = pooled.iter().map(|p| p.1).collect();
    let outcomes: Vec<bool> = pooled.iter().map(|p| cs[p.0].y).collect();
    Ok(roc_auc(&scores, &outcomes)?.auc)
}

fn write_traces(config: &RunConfig, bt: &Backtest<'_>, rules: &[crate::optimizer::Rule]) -> Result<()> {
    let dir = config.out.join("optimizer_trace");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let options = bt.schedule.optimizer_options();
    for w in bt.windows.iter().filter(|w| !w.is_empty()) {
        let records = bt.window_records(w)?;
        let mut buf = Vec::new();
        write_trace(&records, &options, &mut buf)?;
        let text = String::from_utf8(buf).map_err(|e| Error::Invariant(e.to_string()))?;
        // The trace is the same for every rule; the rules differ only in the pick.
        let _ = rules;
        write_file(&dir, &format!("window_{:02}.csv", w.id), &text)?;
    }
    Ok(())
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:+.2}%"))
}

fn fmt_ci(ci: Option<crate::rolling::Interval>) -> String {
    ci.map_or_else(String::new, |c| format!("[{:+.2}, {:+.2}]", c.lo, c.hi))
}

#[derive(Debug, Clone)]
pub struct DiagnoseSummary {
    pub auc: Option<f64>,
    pub mean_deviation: Option<f64>,
    pub importance: Vec<f64>,
}

pub fn cmd_diagnose(config: &RunConfig) -> Result<DiagnoseSummary> {
    let d = &config.diagnose;
    let cohort = load_cohort(config)?;
    let schedule = config.effective_schedule();
    let forest = config.effective_forest();
    let bt = Backtest::prepare(&cohort, &schedule, &forest, false)?;
    let pooled = bt.pooled_scores()?;
    let cs = &cohort.consultations;
    let scores: Vec<f64> = pooled.iter().map(|p| p.1).collect();
    let outcomes: Vec<bool> = pooled.iter().map(|p| cs[p.0].y).collect();
    let ids: Vec<&str> = pooled.iter().map(|p| cs[p.0].patient_id.as_str()).collect();
    let out = &config.out;

    let roc = roc_auc(&scores, &outcomes)?;
    write_file(out, "roc.csv", &report::roc_csv(&roc)?)?;
    let bins = calibration_bins(&scores, &outcomes, &ids, d.calibration_bin_size)?;
    write_file(out, "calibration.csv", &report::calibration_csv(&bins)?)?;
    write_file(out, "clinic_rates.csv", &report::clinic_rates_csv(&clinic_rates(&cohort), d.min_clinic_size)?)?;

    let scored: Vec<ScoredRecord<'_>> = pooled
        .iter()
        .map(|&(i, m)| ScoredRecord { clinic_id: &cs[i].clinic_id, m, y: cs[i].y, rho_j: cs[i].rho_j })
        .collect();
    let deviations = mean_deviation(&scored);
    let defined: Vec<f64> = deviations.values().flatten().copied().collect();
    write_file(out, "mean_deviation_hist.csv", &report::histogram_csv(&histogram(&defined, d.histogram_bins)?)?)?;

    let mut names = vec!["intercept"];
    names.extend(crate::cohort::Clinic::CHARACTERISTICS);
    let (mut rows, mut response) = (Vec::new(), Vec::new());
    for (id, dc) in &deviations {
        if let (Some(dc), Some(clinic)) = (dc, cohort.clinics.get(id)) {
            let mut row = vec![1.0];
            row.extend(clinic.characteristics());
            rows.push(row);
            response.push(*dc);
        }
    }
    if rows.len() > names.len() {
        let fit = ols_robust(&rows, &response, &names).map_err(|e| e.context("mean deviation regression"))?;
        write_file(out, "ols_table.csv", &report::ols_csv(&fit)?)?;
    } else {
        log::warn!("{} clinics with characteristics; skipping the regression", rows.len());
        write_file(out, "ols_table.csv", "term,coef,se,ci_lo,ci_hi,n\n")?;
    }

    let last = bt
        .windows
        .iter()
        .rev()
        .find(|w| !w.is_empty())
        .ok_or_else(|| Error::Input("every evaluation window is empty".into()))?;
    let model = fit_at(&cohort, &schedule, &forest, last.eval_start)?;
    let data = Dataset::from_consultations(&cs[last.eval.clone()])?;
    let importance = permutation_importance(&model, &data, d.importance_reps, config.seed)?;
    write_file(out, "feature_importance.csv", &report::importance_csv(&importance)?)?;

    let mean_dev = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    match roc.auc {
        Some(auc) => println!("AUC {auc:.4}"),
        None => println!("AUC undefined (single outcome class)"),
    }
    Ok(DiagnoseSummary { auc: roc.auc, mean_deviation: mean_dev, importance })
}

pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<SweepPoint>> {
    let cohort = load_cohort(config)?;
    let bt = Backtest::prepare(&cohort, &config.effective_schedule(), &config.effective_forest(), false)?;
    let points = machine_only_sweep(&bt, &default_k_grid(config.sweep.k_steps))?;
    write_file(&config.out, "machine_only_curve.csv", &report::curve_csv(&points)?)?;
    let summary = MachineOnlySummary::new(&points);
    if let Some(p) = &summary.k_zero {
        println!(
            "k = 0: prescriptions {}, treated positives {}",
            fmt_pct(p.mean_pct_delta_rho),
            fmt_pct(p.mean_pct_delta_buti)
        );
    }
    println!("thresholds improving both outcomes: {}", summary.dominating_k.len());
    Ok(points)
}
