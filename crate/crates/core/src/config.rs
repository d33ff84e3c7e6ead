//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::{CohortConfig, ColumnMap};
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::optimizer::Rule;
use crate::rolling::Schedule;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Which constrained programs a run solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RuleSelection {
    Reduction,
    Buti,
    Both,
}

impl RuleSelection {
    pub fn rules(self) -> Vec<Rule> {
        match self {
            RuleSelection::Reduction => vec![Rule::Reduction],
            RuleSelection::Buti => vec![Rule::Buti],
            RuleSelection::Both => Rule::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Variants {
    /// Also run ex ante with pregnant patients exempt.
    pub exempt_pregnant: bool,
    /// Also run the machine-only threshold sweep.
    pub machine_only: bool,
    /// Train on a fixed-length history of `eval_start_day` days when
    /// `schedule.train_days` is unset.
    pub fixed_train_window: bool,
}

/// Read a cohort from CSV instead of generating one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub cohort_csv: PathBuf,
    #[serde(default)]
    pub clinics_csv: Option<PathBuf>,
    #[serde(default)]
    pub columns: ColumnMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub calibration_bin_size: usize,
    pub histogram_bins: usize,
    /// Clinics with fewer consultations are left out of exported rate tables.
    pub min_clinic_size: usize,
    pub importance_reps: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            calibration_bin_size: 100,
            histogram_bins: 20,
            min_clinic_size: 3,
            importance_reps: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// The grid is `0, 1/steps, ..., 1` plus a never-prescribe sentinel.
    pub k_steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { k_steps: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub rule: RuleSelection,
    pub out: PathBuf,
    /// Allow preferences with `b >= a` in payoff reporting.
    pub allow_unordered_preferences: bool,
    /// Policy-maker costs used for the payoff columns of the report.
    pub payoff_a: f64,
    pub payoff_b: f64,
    /// Write the optimizer's evaluated pairs for every ex-post window.
    pub optimizer_trace: bool,
    pub input: Option<InputConfig>,
    pub cohort: CohortConfig,
    pub forest: ForestParams,
    pub schedule: Schedule,
    pub variants: Variants,
    pub diagnose: DiagnoseConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 7,
            rule: RuleSelection::Both,
            out: PathBuf::from("out"),
            allow_unordered_preferences: false,
            payoff_a: 2.0,
            payoff_b: 1.0,
            optimizer_trace: false,
            input: None,
            cohort: CohortConfig::default(),
            forest: ForestParams::default(),
            schedule: Schedule::default(),
            variants: Variants::default(),
            diagnose: DiagnoseConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("reading {}", path.display())))
    }

    /// TOML text of the configuration. The forest seed is written as the run
    /// seed, which is what the forest actually uses.
    pub fn to_toml(&self) -> Result<String> {
        let mut c = self.clone();
        c.forest = self.effective_forest();
        toml::to_string(&c).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {CONFIG_SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.cohort.validate().map_err(|e| prefix("cohort", e))?;
        self.forest.validate().map_err(|e| prefix("forest", e))?;
        self.schedule.validate().map_err(|e| prefix("schedule", e))?;
        self.preferences()?;
        if self.diagnose.calibration_bin_size == 0 {
            return Err(Error::config("diagnose.calibration_bin_size", "must be at least 1"));
        }
        if self.diagnose.histogram_bins == 0 {
            return Err(Error::config("diagnose.histogram_bins", "must be at least 1"));
        }
        if self.diagnose.importance_reps == 0 {
            return Err(Error::config("diagnose.importance_reps", "must be at least 1"));
        }
        if self.sweep.k_steps == 0 {
            return Err(Error::config("sweep.k_steps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn preferences(&self) -> Result<crate::policy::Preferences> {
        let p = if self.allow_unordered_preferences {
            crate::policy::Preferences::new_unordered(self.payoff_a, self.payoff_b)
        } else {
            crate::policy::Preferences::new(self.payoff_a, self.payoff_b)
        };
        p.map_err(|e| Error::config("payoff_b", e.to_string()))
    }

    /// Schedule with the run seed and the fixed-window variant applied.
    pub fn effective_schedule(&self) -> Schedule {
        let mut s = self.schedule.clone();
        s.seed = self.seed;
        if self.variants.fixed_train_window && s.train_days.is_none() {
            s.train_days = Some(s.eval_start_day);
        }
        s
    }

    pub fn effective_forest(&self) -> ForestParams {
        self.forest.with_seed(self.seed)
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Config { field, message } => Error::config(format!("{section}.{field}"), message),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.seed = 11;
        c.schedule.n_windows = Some(3);
        c.variants.exempt_pregnant = true;
        let text = c.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back.forest.seed, 11);
        c.forest.seed = 11;
        assert_eq!(back, c);
    }

    #[test]
    fn shipped_configs_load() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
        assert_eq!(RunConfig::load(dir.join("desk.toml")).unwrap(), RunConfig::default());
        let small = RunConfig::load(dir.join("small.toml")).unwrap();
        assert_eq!(small.cohort.n_consultations, 4_000);
    }

    #[test]
    fn field_errors() {
        let e = RunConfig::from_toml("[cohort]\ntarget_positive_rate = 1.5\n").unwrap_err();
        assert!(e.to_string().contains("cohort.target_positive_rate"), "{e}");
        assert_eq!(e.exit_code(), 1);
        let e = RunConfig::from_toml("schema_version = 9\n").unwrap_err();
        assert!(e.to_string().contains("schema_version"));
        let e = RunConfig::from_toml("bogus = 1\n").unwrap_err();
        assert_eq!(e.exit_code(), 1);
        let e = RunConfig::from_toml("payoff_a = 1.0\npayoff_b = 2.0\n").unwrap_err();
        assert!(e.to_string().contains("payoff_b"));
        assert!(RunConfig::from_toml("payoff_a = 1.0\npayoff_b = 2.0\nallow_unordered_preferences = true\n").is_ok());
    }

    #[test]
    fn fixed_window_variant() {
        let mut c = RunConfig::default();
        c.variants.fixed_train_window = true;
        assert_eq!(c.effective_schedule().train_days, Some(360));
        assert_eq!(c.effective_schedule().seed, c.seed);
    }
}
