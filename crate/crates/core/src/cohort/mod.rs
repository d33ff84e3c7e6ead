//! Consultation cohorts: synthetic generation, CSV ingestion, the initial
//! consultation filter and rolling window splits.

mod filter;
mod generate;
mod ingest;
mod windows;

use std::collections::BTreeMap;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filter::{filter_initial, EventKind, RawEvent, BLOCKING_DAYS};
pub use generate::{generate, CohortConfig};
pub use ingest::{ingest_clinics_csv, ingest_csv, ColumnMap};
pub use windows::{split_windows, Window};

pub const COHORT_SCHEMA_VERSION: u32 = 1;

/// One initial patient contact with a laboratory test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consultation {
    pub patient_id: String,
    pub clinic_id: String,
    pub day: u32,
    pub covariates: Vec<f64>,
    /// Bacterial isolate in the urine sample.
    pub y: bool,
    /// Physician prescription at the consultation, before the test result.
    pub rho_j: bool,
    /// Prescription within 10 days after the test result.
    pub post_test_rx: bool,
    pub pregnant: bool,
}

/// Observable clinic characteristics plus the latent generator parameters.
///
/// `leniency` and `expertise` are written to diagnostics output only and never
/// enter the risk model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clinic {
    pub clinic_id: String,
    pub n_physicians: f64,
    pub mean_age: f64,
    pub share_female: f64,
    pub patients_per_physician: f64,
    pub tests_per_patient: f64,
    pub leniency: f64,
    pub expertise: f64,
}

impl Clinic {
    /// Names of the observable characteristics, in `characteristics()` order.
    pub const CHARACTERISTICS: [&'static str; 5] = [
        "patients_per_physician",
        "tests_per_patient",
        "n_physicians",
        "mean_age",
        "share_female",
    ];

    pub fn characteristics(&self) -> [f64; 5] {
        [
            self.patients_per_physician,
            self.tests_per_patient,
            self.n_physicians,
            self.mean_age,
            self.share_female,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.share_female) {
            return Err(Error::Input(format!(
                "clinic {}: share_female {} outside [0, 1]",
                self.clinic_id, self.share_female
            )));
        }
        if self.n_physicians.is_nan() || self.n_physicians < 1.0 {
            return Err(Error::Input(format!(
                "clinic {}: n_physicians {} below 1",
                self.clinic_id, self.n_physicians
            )));
        }
        Ok(())
    }
}

/// Where a cohort came from and the constants fitted while generating it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMeta {
    pub schema_version: u32,
    pub source: String,
    pub seed: Option<u64>,
    pub config: Option<CohortConfig>,
    pub n_features: usize,
    pub horizon_days: u32,
    /// Calibrated constants of the generator (empty for ingested data).
    #[serde(default)]
    pub calibration: BTreeMap<String, f64>,
    /// Index of the covariate carrying the most generative signal, when known.
    pub strongest_feature: Option<usize>,
    /// Indices of covariates that are pure noise, when known.
    #[serde(default)]
    pub noise_features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub consultations: Vec<Consultation>,
    pub clinics: BTreeMap<String, Clinic>,
    pub meta: CohortMeta,
}

impl Cohort {
    /// Builds a cohort, sorting consultations by day (stable) and checking invariants.
    pub fn new(
        mut consultations: Vec<Consultation>,
        clinics: BTreeMap<String, Clinic>,
        meta: CohortMeta,
    ) -> Result<Self> {
        consultations.sort_by_key(|c| c.day);
        let mut seen = HashSet::with_capacity(consultations.len());
        for (i, c) in consultations.iter().enumerate() {
            if c.covariates.len() != meta.n_features {
                return Err(Error::Input(format!(
                    "consultation {} has {} covariates, expected {}",
                    i,
                    c.covariates.len(),
                    meta.n_features
                )));
            }
            if let Some(j) = c.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::Input(format!(
                    "consultation {i}: covariate x{j} is not finite"
                )));
            }
            if c.day >= meta.horizon_days {
                return Err(Error::Input(format!(
                    "consultation {i}: day {} outside horizon {}",
                    c.day, meta.horizon_days
                )));
            }
            if !seen.insert((c.patient_id.as_str(), c.day)) {
                return Err(Error::Input(format!(
                    "duplicate consultation for patient {} on day {}",
                    c.patient_id, c.day
                )));
            }
        }
        for clinic in clinics.values() {
            clinic.validate()?;
        }
        Ok(Cohort {
            consultations,
            clinics,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.consultations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consultations.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.meta.n_features
    }

    /// Index of the first consultation on or after `day`.
    pub fn lower_bound(&self, day: u32) -> usize {
        self.consultations.partition_point(|c| c.day < day)
    }

    pub fn positive_rate(&self) -> f64 {
        share(&self.consultations, |c| c.y)
    }

    pub fn prescription_rate(&self) -> f64 {
        share(&self.consultations, |c| c.rho_j)
    }

    pub fn pregnant_share(&self) -> f64 {
        share(&self.consultations, |c| c.pregnant)
    }

    /// Cohort as CSV in the documented column layout.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "patient_id",
            "clinic_id",
            "day",
            "y",
            "rho_j",
            "post_test_rx",
            "pregnant",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..self.meta.n_features).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for c in &self.consultations {
            let mut row = vec![
                c.patient_id.clone(),
                c.clinic_id.clone(),
                c.day.to_string(),
                bit(c.y),
                bit(c.rho_j),
                bit(c.post_test_rx),
                bit(c.pregnant),
            ];
            row.extend(c.covariates.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        finish_csv(w)
    }

    /// Clinic table as CSV, including the latent generator fields.
    pub fn clinics_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "clinic_id",
            "n_physicians",
            "mean_age",
            "share_female",
            "patients_per_physician",
            "tests_per_patient",
            "leniency",
            "expertise",
        ])?;
        for c in self.clinics.values() {
            w.write_record([
                c.clinic_id.clone(),
                c.n_physicians.to_string(),
                c.mean_age.to_string(),
                c.share_female.to_string(),
                c.patients_per_physician.to_string(),
                c.tests_per_patient.to_string(),
                c.leniency.to_string(),
                c.expertise.to_string(),
            ])?;
        }
        finish_csv(w)
    }
}

fn share(cs: &[Consultation], f: impl Fn(&Consultation) -> bool) -> f64 {
    if cs.is_empty() {
        return f64::NAN;
    }
    cs.iter().filter(|c| f(c)).count() as f64 / cs.len() as f64
}

fn bit(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Invariant(format!("csv buffer flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
}
