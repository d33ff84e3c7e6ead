use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Encoded, ForestParams};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    /// Rows with code <= `code` go left.
    code: u32,
    threshold: f64,
}

struct Grower<'a> {
    enc: &'a Encoded,
    y: &'a [f64],
    params: &'a ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
    hist_n: Vec<u32>,
    hist_sum: Vec<f64>,
    pairs: Vec<(u32, f64)>,
}

impl Tree {
    pub(crate) fn grow(enc: &Encoded, y: &[f64], params: &ForestParams, mtry: usize, rng: &mut Rng) -> Tree {
        let n = y.len();
        let mut rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
        let widest = enc.levels.iter().map(Vec::len).max().unwrap_or(0);
        let mut g = Grower {
            enc,
            y,
            params,
            mtry,
            nodes: Vec::new(),
            hist_n: vec![0; widest],
            hist_sum: vec![0.0; widest],
            pairs: Vec::new(),
        };
        g.build(&mut rows, 0, rng);
        Tree { nodes: g.nodes }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }

    /// Features used by at least one split.
    pub fn features_used(&self) -> Vec<usize> {
        let mut fs: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature as usize),
                Node::Leaf { .. } => None,
            })
            .collect();
        fs.sort_unstable();
        fs.dedup();
        fs
    }

    pub(crate) fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Input("tree has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                Node::Leaf { value } if !(0.0..=1.0).contains(&value) => {
                    return Err(Error::Input(format!("leaf {i} value {value} outside [0, 1]")));
                }
                Node::Split { feature, threshold, left, right } => {
                    let ok = (feature as usize) < n_features
                        && threshold.is_finite()
                        && (left as usize) < self.nodes.len()
                        && (right as usize) < self.nodes.len()
                        && left as usize > i
                        && right as usize > i;
                    if !ok {
                        return Err(Error::Input(format!("malformed split node {i}")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

impl Grower<'_> {
    fn build(&mut self, rows: &mut [u32], depth: usize, rng: &mut Rng) -> u32 {
        let id = self.nodes.len() as u32;
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| self.y[r as usize]).sum();
        let leaf = Node::Leaf { value: sum / n as f64 };
        self.nodes.push(leaf);

        let first = self.y[rows[0] as usize];
        let constant = rows.iter().all(|&r| self.y[r as usize] == first);
        if constant || depth >= self.params.max_depth || n < 2 * self.params.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(rows, sum, rng) else {
            return id;
        };

        let codes = &self.enc.codes[best.feature];
        let mut split_at = 0;
        for i in 0..n {
            if codes[rows[i] as usize] <= best.code {
                rows.swap(i, split_at);
                split_at += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(split_at);
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        self.nodes[id as usize] = Node::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[u32], sum: f64, rng: &mut Rng) -> Option<Candidate> {
        let d = self.enc.levels.len();
        let mut features = index::sample(rng, d, self.mtry.min(d)).into_vec();
        features.sort_unstable();
        let n = rows.len();
        let parent = sum * sum / n as f64;
        let mut best: Option<Candidate> = None;
        for f in features {
            let levels = &self.enc.levels[f];
            if levels.len() < 2 {
                continue;
            }
            let codes = &self.enc.codes[f];
            let mut consider = |left_n: usize, left_sum: f64, lo: u32, hi: u32| {
                let right_n = n - left_n;
                if left_n < self.params.min_leaf || right_n < self.params.min_leaf {
                    return;
                }
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64 - parent;
                if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate {
                        gain,
                        feature: f,
                        code: lo,
                        threshold: 0.5 * (levels[lo as usize] + levels[hi as usize]),
                    });
                }
            };
            if levels.len() <= 2 * n {
                let u = levels.len();
                self.hist_n[..u].fill(0);
                self.hist_sum[..u].fill(0.0);
                for &r in rows {
                    let c = codes[r as usize] as usize;
                    self.hist_n[c] += 1;
                    self.hist_sum[c] += self.y[r as usize];
                }
                let (mut acc_n, mut acc_sum) = (0usize, 0.0);
                let mut prev: Option<u32> = None;
                for c in 0..u {
                    if self.hist_n[c] == 0 {
                        continue;
                    }
                    if let Some(p) = prev {
                        consider(acc_n, acc_sum, p, c as u32);
                    }
                    acc_n += self.hist_n[c] as usize;
                    acc_sum += self.hist_sum[c];
                    prev = Some(c as u32);
                }
            } else {
                self.pairs.clear();
                self.pairs
                    .extend(rows.iter().map(|&r| (codes[r as usize], self.y[r as usize])));
                self.pairs.sort_unstable_by_key(|p| p.0);
                let (mut acc_n, mut acc_sum) = (0usize, 0.0);
                let mut i = 0;
                while i < self.pairs.len() {
                    let c = self.pairs[i].0;
                    let (mut group_n, mut group_sum) = (0usize, 0.0);
                    while i < self.pairs.len() && self.pairs[i].0 == c {
                        group_n += 1;
                        group_sum += self.pairs[i].1;
                        i += 1;
                    }
                    if acc_n > 0 {
                        let prev = self.pairs[i - group_n - 1].0;
                        consider(acc_n, acc_sum, prev, c);
                    }
                    acc_n += group_n;
                    acc_sum += group_sum;
                }
            }
        }
        best
    }
}
