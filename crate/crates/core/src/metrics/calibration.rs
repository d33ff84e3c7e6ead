use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub mean_predicted_risk: f64,
    pub mean_outcome: f64,
    pub bin_size: usize,
}

/// Chunks of `bin_size` records taken from the highest score down. Equal
/// scores are ordered by `ids`. The last bin may be smaller.
pub fn calibration_bins(scores: &[f64], outcomes: &[bool], ids: &[&str], bin_size: usize) -> Result<Vec<CalibrationBin>> {
    if bin_size == 0 {
        return Err(Error::Input("bin size must be at least 1".into()));
    }
    if scores.len() != outcomes.len() || scores.len() != ids.len() {
        return Err(Error::Input("scores, outcomes and ids differ in length".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then_with(|| ids[i].cmp(ids[j])));
    Ok(order
        .chunks(bin_size)
        .map(|chunk| {
            let n = chunk.len() as f64;
            CalibrationBin {
                mean_predicted_risk: chunk.iter().map(|&i| scores[i]).sum::<f64>() / n,
                mean_outcome: chunk.iter().filter(|&&i| outcomes[i]).count() as f64 / n,
                bin_size: chunk.len(),
            }
        })
        .collect())
}
