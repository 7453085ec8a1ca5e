//! Seven binary classifiers behind one fit/score contract.
//!
//! Every model scores rows in `[0, 1]`; labels come from [`predict_labels`] with a strict
//! `score > threshold` rule.

pub mod forest;
pub mod gbt;
pub mod knn;
pub mod logistic;
pub mod mlp;
pub mod svc;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use forest::{Forest, MaxFeatures, RfParams};
pub use gbt::{leaf_weight, sigmoid, split_gain, GbtModel, GbtParams};
pub use knn::{KnnModel, KnnParams};
pub use logistic::{logistic_objective, LogisticModel, LrParams};
pub use mlp::{mlp_objective, Activation, MlpModel, MlpParams, Optimizer};
pub use svc::{Kernel, SvcModel, SvcParams};
pub use tree::{best_split, gini_impurity, DtParams, Node, Tree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AlgorithmId {
    LR,
    DT,
    RF,
    KNN,
    MLP,
    SVC,
    GBT,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 7] = [
        AlgorithmId::LR,
        AlgorithmId::DT,
        AlgorithmId::RF,
        AlgorithmId::KNN,
        AlgorithmId::MLP,
        AlgorithmId::SVC,
        AlgorithmId::GBT,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmId::LR => "LR",
            AlgorithmId::DT => "DT",
            AlgorithmId::RF => "RF",
            AlgorithmId::KNN => "KNN",
            AlgorithmId::MLP => "MLP",
            AlgorithmId::SVC => "SVC",
            AlgorithmId::GBT => "GBT",
        }
    }

    pub fn is_tree_model(self) -> bool {
        matches!(self, AlgorithmId::DT | AlgorithmId::RF | AlgorithmId::GBT)
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm")]
pub enum HyperparameterSet {
    LR(LrParams),
    DT(DtParams),
    RF(RfParams),
    KNN(KnnParams),
    MLP(MlpParams),
    SVC(SvcParams),
    GBT(GbtParams),
}

/// Which hyperparameter column of the reference configuration to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetColumn {
    LowAutonomy,
    Motivated,
    Direct,
}

impl HyperparameterSet {
    pub fn algorithm(&self) -> AlgorithmId {
        match self {
            HyperparameterSet::LR(_) => AlgorithmId::LR,
            HyperparameterSet::DT(_) => AlgorithmId::DT,
            HyperparameterSet::RF(_) => AlgorithmId::RF,
            HyperparameterSet::KNN(_) => AlgorithmId::KNN,
            HyperparameterSet::MLP(_) => AlgorithmId::MLP,
            HyperparameterSet::SVC(_) => AlgorithmId::SVC,
            HyperparameterSet::GBT(_) => AlgorithmId::GBT,
        }
    }

    pub fn default_for(a: AlgorithmId) -> Self {
        match a {
            AlgorithmId::LR => HyperparameterSet::LR(LrParams::default()),
            AlgorithmId::DT => HyperparameterSet::DT(DtParams::default()),
            AlgorithmId::RF => HyperparameterSet::RF(RfParams::default()),
            AlgorithmId::KNN => HyperparameterSet::KNN(KnnParams::default()),
            AlgorithmId::MLP => HyperparameterSet::MLP(MlpParams::default()),
            AlgorithmId::SVC => HyperparameterSet::SVC(SvcParams::default()),
            AlgorithmId::GBT => HyperparameterSet::GBT(GbtParams::default()),
        }
    }

    /// Reference per-arm settings; values without a reference setting keep their
    /// defaults.
    pub fn preset(a: AlgorithmId, col: PresetColumn) -> Self {
        use PresetColumn::*;
        let pick = |low: f64, mot: f64, dir: f64| match col {
            LowAutonomy => low,
            Motivated => mot,
            Direct => dir,
        };
        let pick_n = |low: usize, mot: usize, dir: usize| match col {
            LowAutonomy => low,
            Motivated => mot,
            Direct => dir,
        };
        match a {
            AlgorithmId::LR => HyperparameterSet::LR(LrParams {
                c: pick(10.0, 0.1, 10.0),
                tol: 0.002,
                ..Default::default()
            }),
            AlgorithmId::DT => HyperparameterSet::DT(DtParams {
                min_samples_split: 2,
                min_samples_leaf: pick_n(2, 3, 1),
                max_depth: None,
            }),
            AlgorithmId::RF => HyperparameterSet::RF(RfParams {
                n_estimators: pick_n(2, 200, 2),
                max_depth: Some(pick_n(2, 7, 2)),
                min_samples_leaf: pick_n(13, 12, 13),
                ..Default::default()
            }),
            AlgorithmId::KNN => HyperparameterSet::KNN(KnnParams {
                n_neighbors: pick_n(3, 20, 2),
                leaf_size: pick_n(2, 3, 3),
            }),
            AlgorithmId::MLP => HyperparameterSet::MLP(MlpParams {
                hidden: 50,
                activation: Activation::Tanh,
                alpha: pick(0.1, 0.01, 0.1),
                ..Default::default()
            }),
            AlgorithmId::SVC => HyperparameterSet::SVC(SvcParams {
                c: 5.0,
                kernel: Kernel::Rbf,
                ..Default::default()
            }),
            AlgorithmId::GBT => HyperparameterSet::GBT(GbtParams {
                max_depth: pick_n(5, 7, 5),
                n_estimators: pick_n(100, 60, 20),
                max_iterations: 50,
                ..Default::default()
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::invalid(format!("{what} must be at least 1")))
            } else {
                Ok(())
            }
        };
        let posf = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be positive")))
            }
        };
        match self {
            HyperparameterSet::LR(p) => {
                posf(p.c, "LR c")?;
                posf(p.tol, "LR tol")?;
                pos(p.max_iter, "LR max_iter")
            }
            HyperparameterSet::DT(p) => {
                pos(p.min_samples_split, "DT min_samples_split")?;
                pos(p.min_samples_leaf, "DT min_samples_leaf")?;
                p.max_depth.map_or(Ok(()), |d| pos(d, "DT max_depth"))
            }
            HyperparameterSet::RF(p) => {
                pos(p.n_estimators, "RF n_estimators")?;
                pos(p.min_samples_leaf, "RF min_samples_leaf")?;
                pos(p.min_samples_split, "RF min_samples_split")?;
                p.max_depth.map_or(Ok(()), |d| pos(d, "RF max_depth"))
            }
            HyperparameterSet::KNN(p) => {
                pos(p.n_neighbors, "KNN n_neighbors")?;
                pos(p.leaf_size, "KNN leaf_size")
            }
            HyperparameterSet::MLP(p) => {
                pos(p.hidden, "MLP hidden")?;
                pos(p.batch_size, "MLP batch_size")?;
                pos(p.max_epochs, "MLP max_epochs")?;
                pos(p.n_iter_no_change, "MLP n_iter_no_change")?;
                posf(p.learning_rate, "MLP learning_rate")?;
                posf(p.tol, "MLP tol")?;
                if p.alpha >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("MLP alpha must be non-negative"))
                }
            }
            HyperparameterSet::SVC(p) => {
                posf(p.c, "SVC c")?;
                posf(p.tol, "SVC tol")?;
                p.gamma.map_or(Ok(()), |g| posf(g, "SVC gamma"))
            }
            HyperparameterSet::GBT(p) => {
                pos(p.max_depth, "GBT max_depth")?;
                pos(p.n_estimators, "GBT n_estimators")?;
                pos(p.max_iterations, "GBT max_iterations")?;
                posf(p.learning_rate, "GBT learning_rate")?;
                if p.lambda >= 0.0 && p.gamma >= 0.0 && p.min_child_weight >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "GBT lambda, gamma and min_child_weight must be non-negative",
                    ))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParams {
    Logistic(LogisticModel),
    Tree(Tree),
    Forest(Forest),
    Knn(KnnModel),
    Mlp(MlpModel),
    Svc(SvcModel),
    Gbt(GbtModel),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_train: usize,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    /// Training loss per iteration/round/epoch where the fitter has one.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub hyperparameters: HyperparameterSet,
    pub seed: u64,
    pub n_features: usize,
    pub params: FittedParams,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    algorithm: AlgorithmId,
    model: TrainedModel,
}

pub fn fit(hp: &HyperparameterSet, x: &Matrix, y: &[u8], seed: u64) -> Result<TrainedModel> {
    hp.validate()?;
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if x.rows() < 2 {
        return Err(Error::invalid("fitting needs at least 2 rows"));
    }
    if x.cols() == 0 {
        return Err(Error::invalid("fitting needs at least one feature"));
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("training features"));
    }
    if let Some(v) = y.iter().find(|&&v| v > 1) {
        return Err(Error::invalid(format!("label {v} is not binary")));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    let single_class = pos == 0 || pos == y.len();
    let a = hp.algorithm();
    if single_class && !matches!(a, AlgorithmId::DT | AlgorithmId::KNN | AlgorithmId::RF) {
        return Err(Error::degenerate(format!(
            "{a} needs both classes in the training data"
        )));
    }
    let mut meta = TrainingMeta {
        n_train: x.rows(),
        ..Default::default()
    };
    let params = match hp {
        HyperparameterSet::LR(p) => {
            let f = logistic::fit_logistic(x, y, p);
            meta.iterations = f.iterations;
            meta.final_loss = f.loss_trace.last().copied();
            meta.loss_trace = f.loss_trace;
            FittedParams::Logistic(f.model)
        }
        HyperparameterSet::DT(p) => {
            let t = tree::fit_tree(x, y, p);
            meta.iterations = 1;
            FittedParams::Tree(t)
        }
        HyperparameterSet::RF(p) => {
            let f = forest::fit_forest(x, y, p, seed);
            meta.iterations = f.trees.len();
            FittedParams::Forest(f)
        }
        HyperparameterSet::KNN(p) => FittedParams::Knn(knn::fit_knn(x, y, p)),
        HyperparameterSet::MLP(p) => {
            let f = mlp::fit_mlp(x, y, p, seed);
            meta.iterations = f.epochs;
            meta.final_loss = f.loss_trace.last().copied();
            meta.loss_trace = f.loss_trace;
            FittedParams::Mlp(f.model)
        }
        HyperparameterSet::SVC(p) => {
            let f = svc::fit_svc(x, y, p);
            meta.iterations = f.iterations;
            meta.final_loss = Some(f.objective);
            FittedParams::Svc(f.model)
        }
        HyperparameterSet::GBT(p) => {
            let f = gbt::fit_gbt(x, y, p);
            meta.iterations = f.model.trees.len();
            meta.final_loss = f.loss_trace.last().copied();
            meta.loss_trace = f.loss_trace;
            FittedParams::Gbt(f.model)
        }
    };
    Ok(TrainedModel {
        hyperparameters: *hp,
        seed,
        n_features: x.cols(),
        params,
        meta,
    })
}

impl TrainedModel {
    pub fn algorithm(&self) -> AlgorithmId {
        self.hyperparameters.algorithm()
    }

    /// Score of a single row; the caller guarantees the dimension.
    pub fn score_row(&self, x: &[f64]) -> f64 {
        let s = match &self.params {
            FittedParams::Logistic(m) => sigmoid(m.margin(x)),
            FittedParams::Tree(t) => t.predict(x),
            FittedParams::Forest(f) => f.score(x),
            FittedParams::Knn(m) => m.score(x),
            FittedParams::Mlp(m) => sigmoid(m.margin(x)),
            FittedParams::Svc(m) => m.score(x),
            FittedParams::Gbt(m) => sigmoid(m.margin(x)),
        };
        s.clamp(0.0, 1.0)
    }

    pub fn predict_scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        if x.cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.cols(),
            });
        }
        Ok((0..x.rows())
            .into_par_iter()
            .map(|i| self.score_row(x.row(i)))
            .collect())
    }

    /// Trees on the scale the model scores with before any link: GBT margin trees, RF
    /// trees (each weighted `1/n`), or the single DT.
    pub fn trees(&self) -> Option<(Vec<&Tree>, f64, f64)> {
        match &self.params {
            FittedParams::Tree(t) => Some((vec![t], 1.0, 0.0)),
            FittedParams::Forest(f) => {
                Some((f.trees.iter().collect(), 1.0 / f.trees.len() as f64, 0.0))
            }
            FittedParams::Gbt(m) => Some((m.trees.iter().collect(), 1.0, m.base_margin)),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            algorithm: self.algorithm(),
            model: self.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Unsupported(format!(
                "model format version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.algorithm != doc.model.algorithm() {
            return Err(Error::invalid(
                "model document algorithm does not match its parameters",
            ));
        }
        Ok(doc.model)
    }
}

pub fn predict_labels(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| (s > threshold) as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_points() -> (Matrix, Vec<u8>) {
        (
            Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [5.0, 0.0], [5.0, 1.0]]).unwrap(),
            vec![0, 0, 1, 1],
        )
    }

    #[test]
    fn every_algorithm_separates_four_points() {
        let (x, y) = four_points();
        for a in AlgorithmId::ALL {
            let mut hp = HyperparameterSet::default_for(a);
            if let HyperparameterSet::KNN(p) = &mut hp {
                p.n_neighbors = 1;
            }
            if let HyperparameterSet::RF(p) = &mut hp {
                p.bootstrap = false;
            }
            let m = fit(&hp, &x, &y, 3).unwrap();
            let labels = predict_labels(&m.predict_scores(&x).unwrap(), 0.5);
            assert_eq!(labels, y, "{a}");
        }
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(predict_labels(&[0.5, 0.51, 0.0], 0.5), vec![0, 1, 0]);
    }

    #[test]
    fn zero_weight_lr_scores_half() {
        let m = TrainedModel {
            hyperparameters: HyperparameterSet::default_for(AlgorithmId::LR),
            seed: 0,
            n_features: 2,
            params: FittedParams::Logistic(LogisticModel {
                weights: vec![0.0, 0.0],
                bias: 0.0,
            }),
            meta: TrainingMeta::default(),
        };
        let x = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
        assert_eq!(m.predict_scores(&x).unwrap(), vec![0.5, 0.5]);
        assert!(m
            .predict_scores(&Matrix::from_rows(&[[1.0]]).unwrap())
            .is_err());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let (x, y) = four_points();
        for a in AlgorithmId::ALL {
            let m = fit(
                &HyperparameterSet::preset(a, PresetColumn::Direct),
                &x,
                &y,
                11,
            )
            .unwrap();
            let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m, "{a}");
        }
    }

    #[test]
    fn single_class_rules() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let dt = fit(
            &HyperparameterSet::default_for(AlgorithmId::DT),
            &x,
            &[1, 1],
            0,
        )
        .unwrap();
        assert_eq!(dt.predict_scores(&x).unwrap(), vec![1.0, 1.0]);
        assert!(fit(
            &HyperparameterSet::default_for(AlgorithmId::LR),
            &x,
            &[1, 1],
            0
        )
        .is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let x = Matrix::from_rows(&[[0.0], [f64::NAN]]).unwrap();
        assert!(fit(
            &HyperparameterSet::default_for(AlgorithmId::DT),
            &x,
            &[0, 1],
            0
        )
        .is_err());
    }
}
