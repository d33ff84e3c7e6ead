use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Clinic, Cohort, CohortMeta, Consultation, COHORT_SCHEMA_VERSION};
use crate::error::{Error, Result};

/// Maps logical consultation fields to CSV header names.
///
/// Covariates are taken either from an explicit column list or from every
/// column named `<covariate_prefix><index>`, ordered by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub patient_id: String,
    pub clinic_id: String,
    pub day: String,
    pub y: String,
    pub rho_j: String,
    pub post_test_rx: String,
    pub pregnant: String,
    pub covariate_prefix: String,
    pub covariates: Option<Vec<String>>,
    /// Days beyond the last observed day are outside the cohort; defaults to max day + 1.
    pub horizon_days: Option<u32>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            patient_id: "patient_id".into(),
            clinic_id: "clinic_id".into(),
            day: "day".into(),
            y: "y".into(),
            rho_j: "rho_j".into(),
            post_test_rx: "post_test_rx".into(),
            pregnant: "pregnant".into(),
            covariate_prefix: "x".into(),
            covariates: None,
            horizon_days: None,
        }
    }
}

struct Layout {
    patient_id: usize,
    clinic_id: usize,
    day: usize,
    y: usize,
    rho_j: usize,
    post_test_rx: usize,
    pregnant: usize,
    covariates: Vec<usize>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Input(format!("missing required column `{name}`")))
}

impl ColumnMap {
    fn layout(&self, headers: &csv::StringRecord) -> Result<Layout> {
        let covariates = match &self.covariates {
            Some(names) => names
                .iter()
                .map(|n| column(headers, n))
                .collect::<Result<Vec<_>>>()?,
            None => {
                let mut indexed: Vec<(usize, usize)> = headers
                    .iter()
                    .enumerate()
                    .filter_map(|(pos, h)| {
                        h.strip_prefix(self.covariate_prefix.as_str())
                            .and_then(|rest| rest.parse::<usize>().ok())
                            .map(|idx| (idx, pos))
                    })
                    .collect();
                indexed.sort_unstable();
                for (expected, (idx, _)) in indexed.iter().enumerate() {
                    if *idx != expected {
                        return Err(Error::Input(format!(
                            "missing required column `{}{expected}`",
                            self.covariate_prefix
                        )));
                    }
                }
                indexed.into_iter().map(|(_, pos)| pos).collect()
            }
        };
        Ok(Layout {
            patient_id: column(headers, &self.patient_id)?,
            clinic_id: column(headers, &self.clinic_id)?,
            day: column(headers, &self.day)?,
            y: column(headers, &self.y)?,
            rho_j: column(headers, &self.rho_j)?,
            post_test_rx: column(headers, &self.post_test_rx)?,
            pregnant: column(headers, &self.pregnant)?,
            covariates,
        })
    }
}

fn binary(record: &csv::StringRecord, pos: usize, name: &str, row: usize) -> Result<bool> {
    match record.get(pos).map(str::trim) {
        Some("0") => Ok(false),
        Some("1") => Ok(true),
        Some(other) => Err(Error::data(
            row,
            format!("`{name}` must be 0 or 1, got `{other}`"),
        )),
        None => Err(Error::data(row, format!("`{name}` missing"))),
    }
}

fn parse_row(record: &csv::StringRecord, layout: &Layout, map: &ColumnMap, row: usize) -> Result<Consultation> {
    let field = |pos: usize| record.get(pos).map(str::trim).unwrap_or("");
    let patient_id = field(layout.patient_id).to_string();
    if patient_id.is_empty() {
        return Err(Error::data(row, "empty patient_id"));
    }
    let day_raw = field(layout.day);
    let day: u32 = day_raw
        .parse()
        .map_err(|_| Error::data(row, format!("`{}` is not a day index: `{day_raw}`", map.day)))?;
    let covariates = layout
        .covariates
        .iter()
        .map(|&pos| {
            let raw = field(pos);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::data(
                    row,
                    format!("covariate column {pos} is not a finite number: `{raw}`"),
                )),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Consultation {
        patient_id,
        clinic_id: field(layout.clinic_id).to_string(),
        day,
        covariates,
        y: binary(record, layout.y, &map.y, row)?,
        rho_j: binary(record, layout.rho_j, &map.rho_j, row)?,
        post_test_rx: binary(record, layout.post_test_rx, &map.post_test_rx, row)?,
        pregnant: binary(record, layout.pregnant, &map.pregnant, row)?,
    })
}

/// Reads a consultation CSV. Errors carry the 1-based data row that failed.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &ColumnMap) -> Result<Cohort> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema, &path.display().to_string())
}

pub(crate) fn ingest_reader<R: std::io::Read>(reader: R, schema: &ColumnMap, source: &str) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let layout = schema.layout(&headers)?;
    let mut consultations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::data(row, e.to_string()))?;
        consultations.push(parse_row(&record, &layout, schema, row)?);
    }
    if consultations.is_empty() {
        log::warn!("{source}: no consultations found");
    }
    let max_day = consultations.iter().map(|c| c.day).max();
    let horizon_days = schema
        .horizon_days
        .unwrap_or_else(|| max_day.map_or(1, |d| d + 1));
    if let Some(h) = schema.horizon_days {
        if let Some(row) = consultations.iter().position(|c| c.day >= h) {
            return Err(Error::data(row + 1, format!("day outside horizon {h}")));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for (i, c) in consultations.iter().enumerate() {
        if !seen.insert((c.patient_id.clone(), c.day)) {
            return Err(Error::data(
                i + 1,
                format!("duplicate consultation for patient {} on day {}", c.patient_id, c.day),
            ));
        }
    }
    let meta = CohortMeta {
        schema_version: COHORT_SCHEMA_VERSION,
        source: source.to_string(),
        seed: None,
        config: None,
        n_features: layout.covariates.len(),
        horizon_days,
        calibration: BTreeMap::new(),
        strongest_feature: None,
        noise_features: Vec::new(),
    };
    Cohort::new(consultations, BTreeMap::new(), meta)
}

/// Reads a clinic table written by [`Cohort::clinics_csv_string`]. Latent
/// columns are optional and default to zero.
pub fn ingest_clinics_csv(path: impl AsRef<Path>) -> Result<BTreeMap<String, Clinic>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let id = column(&headers, "clinic_id")?;
    let numeric: Vec<usize> = Clinic::CHARACTERISTICS
        .iter()
        .map(|n| column(&headers, n))
        .collect::<Result<_>>()?;
    let latent = |name: &str| headers.iter().position(|h| h == name);
    let (len_pos, exp_pos) = (latent("leniency"), latent("expertise"));
    let mut out = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::data(row, e.to_string()))?;
        let num = |pos: usize| -> Result<f64> {
            let raw = record.get(pos).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::data(row, format!("not a finite number: `{raw}`")))
        };
        let clinic = Clinic {
            clinic_id: record.get(id).unwrap_or("").trim().to_string(),
            patients_per_physician: num(numeric[0])?,
            tests_per_patient: num(numeric[1])?,
            n_physicians: num(numeric[2])?,
            mean_age: num(numeric[3])?,
            share_female: num(numeric[4])?,
            leniency: len_pos.map(num).transpose()?.unwrap_or(0.0),
            expertise: exp_pos.map(num).transpose()?.unwrap_or(0.0),
        };
        clinic.validate().map_err(|e| Error::data(row, e.to_string()))?;
        out.insert(clinic.clinic_id.clone(), clinic);
    }
    Ok(out)
}
