//! Bagged regression forest for bacterial risk.
//!
//! Each tree is grown on a bootstrap resample with exact variance-reduction
//! splits over `mtry` randomly chosen features per node; leaves hold the mean
//! outcome of the training rows routed to them. The forest prediction is the
//! mean over trees.

mod importance;
mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Consultation;
use crate::error::{Error, Result};
use crate::seed::{self, stage};

pub use importance::permutation_importance;
pub use tree::{Node, Tree};

pub const MODEL_FORMAT: &str = "stewardsim-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 12,
            min_leaf: 10,
            mtry: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("n_trees", "must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::config("min_leaf", "must be at least 1"));
        }
        if self.mtry == Some(0) {
            return Err(Error::config("mtry", "must be at least 1"));
        }
        Ok(())
    }

    pub fn mtry_for(&self, n_features: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ForestParams {
            seed,
            ..self.clone()
        }
    }
}

/// Column-major training matrix with a real-valued outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if let Some((j, _)) = columns.iter().enumerate().find(|(_, c)| c.len() != y.len()) {
            return Err(Error::Input(format!(
                "column {j} has a different length than the outcome"
            )));
        }
        if columns.iter().flatten().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Input("dataset contains non-finite values".into()));
        }
        Ok(Dataset { columns, y })
    }

    pub fn from_rows(rows: &[(Vec<f64>, f64)]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.0.len());
        if rows.iter().any(|r| r.0.len() != d) {
            return Err(Error::Input("rows have different lengths".into()));
        }
        let columns = (0..d).map(|j| rows.iter().map(|r| r.0[j]).collect()).collect();
        Dataset::new(columns, rows.iter().map(|r| r.1).collect())
    }

    pub fn from_consultations(cs: &[Consultation]) -> Result<Self> {
        let d = cs.first().map_or(0, |c| c.covariates.len());
        let columns = (0..d)
            .map(|j| cs.iter().map(|c| c.covariates[j]).collect())
            .collect();
        Dataset::new(columns, cs.iter().map(|c| if c.y { 1.0 } else { 0.0 }).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

/// Per-feature dense ranks of the training values.
pub(crate) struct Encoded {
    pub levels: Vec<Vec<f64>>,
    pub codes: Vec<Vec<u32>>,
}

impl Encoded {
    fn new(data: &Dataset) -> Self {
        let (levels, codes) = data
            .columns
            .iter()
            .map(|col| {
                let mut levels = col.clone();
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                let codes = col
                    .iter()
                    .map(|v| levels.partition_point(|l| l < v) as u32)
                    .collect();
                (levels, codes)
            })
            .unzip();
        Encoded { levels, codes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub n_features: usize,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: RiskModel,
}

impl RiskModel {
    pub fn fit(data: &Dataset, params: &ForestParams) -> Result<Self> {
        params.validate()?;
        if data.n_rows() == 0 {
            return Err(Error::Input("cannot fit a forest on an empty training set".into()));
        }
        if data.n_features() == 0 {
            return Err(Error::Input("training set has no features".into()));
        }
        let encoded = Encoded::new(data);
        let mtry = params.mtry_for(data.n_features());
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(params.seed, &[stage::FOREST, t as u64]);
                Tree::grow(&encoded, data.y(), params, mtry, &mut rng)
            })
            .collect();
        Ok(RiskModel {
            n_features: data.n_features(),
            params: params.clone(),
            trees,
        })
    }

    pub fn predict(&self, covariates: &[f64]) -> Result<f64> {
        if covariates.len() != self.n_features {
            return Err(Error::Input(format!(
                "expected {} covariates, got {}",
                self.n_features,
                covariates.len()
            )));
        }
        Ok(self.predict_unchecked(covariates))
    }

    fn predict_unchecked(&self, covariates: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(covariates)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict_consultations(&self, cs: &[Consultation]) -> Result<Vec<f64>> {
        if let Some(c) = cs.iter().find(|c| c.covariates.len() != self.n_features) {
            return Err(Error::Input(format!(
                "consultation {} has {} covariates, model expects {}",
                c.patient_id,
                c.covariates.len(),
                self.n_features
            )));
        }
        Ok(cs
            .par_iter()
            .map(|c| self.predict_unchecked(&c.covariates))
            .collect())
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.n_features() != self.n_features {
            return Err(Error::Input(format!(
                "dataset has {} features, model expects {}",
                data.n_features(),
                self.n_features
            )));
        }
        Ok((0..data.n_rows())
            .into_par_iter()
            .map(|i| self.predict_unchecked(&data.row(i)))
            .collect())
    }

    /// Smallest and largest leaf value over all trees.
    pub fn leaf_range(&self) -> (f64, f64) {
        self.trees
            .iter()
            .flat_map(|t| t.leaf_values())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Input(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Input("model has no trees".into()));
        }
        for t in &self.trees {
            t.validate(self.n_features)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data() -> Dataset {
        let rows: Vec<(Vec<f64>, f64)> = (0..100)
            .map(|i| if i < 50 { (vec![0.0], 0.0) } else { (vec![1.0], 1.0) })
            .collect();
        Dataset::from_rows(&rows).unwrap()
    }

    #[test]
    fn constant_outcome() {
        let rows: Vec<(Vec<f64>, f64)> = (0..40).map(|i| (vec![i as f64, (i % 3) as f64], 1.0)).collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let m = RiskModel::fit(&data, &ForestParams { n_trees: 7, ..Default::default() }).unwrap();
        for probe in [[-5.0, 0.0], [3.3, 1.0], [100.0, 9.0]] {
            assert_eq!(m.predict(&probe).unwrap(), 1.0);
        }
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn single_perfect_split() {
        let data = step_data();
        let params = ForestParams { n_trees: 25, max_depth: 1, min_leaf: 1, ..Default::default() };
        let m = RiskModel::fit(&data, &params).unwrap();
        assert!(m.predict(&[0.0]).unwrap() < 0.2);
        assert!(m.predict(&[1.0]).unwrap() > 0.8);
        // Every tree whose bootstrap saw both classes splits at the midpoint.
        for t in &m.trees {
            if let Node::Split { feature, threshold, .. } = t.nodes[0] {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.5);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let rows: Vec<(Vec<f64>, f64)> = (0..300)
            .map(|i| {
                let a = ((i * 37) % 101) as f64 / 10.0;
                let b = ((i * 11) % 13) as f64;
                (vec![a, b, (i % 7) as f64], if a + b > 9.0 { 1.0 } else { 0.0 })
            })
            .collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let params = ForestParams { n_trees: 20, min_leaf: 3, seed: 42, ..Default::default() };
        let a = RiskModel::fit(&data, &params).unwrap();
        let b = RiskModel::fit(&data, &params).unwrap();
        for i in 0..50 {
            let probe = [i as f64 / 5.0, (i % 13) as f64, (i % 7) as f64];
            assert_eq!(a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
        }
        assert_eq!(a, b);
    }

    #[test]
    fn mean_of_trees() {
        let leaf = |v| Tree { nodes: vec![Node::Leaf { value: v }] };
        let m = RiskModel {
            n_features: 1,
            params: ForestParams::default(),
            trees: vec![leaf(0.2), leaf(0.6)],
        };
        assert!((m.predict(&[0.0]).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_error() {
        let m = RiskModel::fit(&step_data(), &ForestParams { n_trees: 2, ..Default::default() }).unwrap();
        assert!(m.predict(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn empty_training_set_is_error() {
        let data = Dataset::new(vec![vec![]], vec![]).unwrap();
        assert!(RiskModel::fit(&data, &ForestParams::default()).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rows: Vec<(Vec<f64>, f64)> = (0..200)
            .map(|i| (vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()], ((i * 7) % 3 == 0) as u8 as f64))
            .collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let m = RiskModel::fit(&data, &ForestParams { n_trees: 10, min_leaf: 2, ..Default::default() }).unwrap();
        let back = RiskModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_wrong_format_tag() {
        let m = RiskModel::fit(&step_data(), &ForestParams { n_trees: 1, ..Default::default() }).unwrap();
        let text = m.to_json().unwrap().replace(MODEL_FORMAT, "other");
        assert!(RiskModel::from_json(&text).is_err());
    }
}
