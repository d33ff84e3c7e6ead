//! Prediction-quality and physician-behaviour diagnostics.

mod calibration;
mod clinic;
mod ols;
mod roc;

pub use calibration::{calibration_bins, CalibrationBin};
pub use clinic::{clinic_rates, histogram, mean_deviation, ClinicRate, HistogramBin, ScoredRecord};
pub use ols::{ols_robust, OlsResult};
pub use roc::{roc_auc, RocResult};
