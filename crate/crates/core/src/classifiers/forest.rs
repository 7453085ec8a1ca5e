use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_presorted, GrowLimits, Presorted, Tree};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
}

impl MaxFeatures {
    pub fn count(self, p: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((p as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

/// Score is the mean over trees of the leaf positive fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn score(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        (s / self.trees.len() as f64).clamp(0.0, 1.0)
    }
}

pub(crate) fn fit_forest(x: &Matrix, y: &[u8], params: &RfParams, seed: u64) -> Forest {
    use rayon::prelude::*;
    let n = x.rows();
    let pre = Presorted::new(x);
    let k = params.max_features.count(x.cols());
    let limits = GrowLimits {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        max_features: (k < x.cols()).then_some(k),
    };
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, "rf-tree", t as u64);
            let weights = params.bootstrap.then(|| {
                let mut w = vec![0.0; n];
                for _ in 0..n {
                    w[r.random_range(0..n)] += 1.0;
                }
                w
            });
            fit_tree_presorted(x, y, &pre, weights.as_deref(), &limits, Some(&mut r))
        })
        .collect();
    Forest { trees }
}
