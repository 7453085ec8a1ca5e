//! Split-gain importance and interventional Shapley attributions.
//!
//! The value of a coalition `S` for row `x` is the mean over background rows `z` of
//! `f(x_S, z_rest)`. [`shap_bruteforce`] enumerates all coalitions; [`shap_tree_fast`]
//! computes the same quantity for tree ensembles by walking each tree once per
//! background row. Tree models are explained on their raw scale: margins for GBT, leaf
//! fractions for DT/RF.

use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::classifiers::{FittedParams, Node, TrainedModel, Tree};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const DEFAULT_GUARD: usize = 20;
pub const DEFAULT_BACKGROUND: usize = 100;

/// Anything that maps a feature row to a real output.
pub trait Scorer: Sync {
    fn n_features(&self) -> usize;
    fn output(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Scorer for (usize, F) {
    fn n_features(&self) -> usize {
        self.0
    }
    fn output(&self, x: &[f64]) -> f64 {
        (self.1)(x)
    }
}

impl Scorer for TrainedModel {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn output(&self, x: &[f64]) -> f64 {
        match &self.params {
            FittedParams::Gbt(m) => m.margin(x),
            FittedParams::Forest(f) => {
                f.trees.iter().map(|t| t.predict(x)).sum::<f64>() / f.trees.len() as f64
            }
            FittedParams::Tree(t) => t.predict(x),
            _ => self.score_row(x),
        }
    }
}

/// Trees with a common weight plus an offset: `f(x) = offset + weight · Σ tree(x)`.
#[derive(Debug, Clone, Copy)]
pub struct TreeEnsemble<'a> {
    pub trees: &'a [Tree],
    pub weight: f64,
    pub offset: f64,
    pub n_features: usize,
}

impl<'a> TreeEnsemble<'a> {
    pub fn of(model: &'a TrainedModel) -> Result<Self> {
        let n_features = model.n_features;
        match &model.params {
            FittedParams::Tree(t) => Ok(Self {
                trees: std::slice::from_ref(t),
                weight: 1.0,
                offset: 0.0,
                n_features,
            }),
            FittedParams::Forest(f) => Ok(Self {
                trees: &f.trees,
                weight: 1.0 / f.trees.len() as f64,
                offset: 0.0,
                n_features,
            }),
            FittedParams::Gbt(m) => Ok(Self {
                trees: &m.trees,
                weight: 1.0,
                offset: m.base_margin,
                n_features,
            }),
            _ => Err(Error::Unsupported(format!(
                "{} is not a tree model",
                model.algorithm()
            ))),
        }
    }
}

impl Scorer for TreeEnsemble<'_> {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn output(&self, x: &[f64]) -> f64 {
        self.offset + self.weight * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub feature_names: Vec<String>,
    /// Total split gain per feature, normalized to sum to 1 (all zero without splits).
    pub scores: Vec<f64>,
    pub raw_gain: Vec<f64>,
    /// Feature indices by descending score, ties by index.
    pub ranking: Vec<usize>,
}

pub fn split_gain_importance(trees: &[Tree], feature_names: &[String]) -> ImportanceRanking {
    let p = feature_names.len();
    let mut raw = vec![0.0; p];
    for t in trees {
        for n in &t.nodes {
            if let Node::Split { feature, gain, .. } = n {
                raw[*feature] += gain.max(0.0);
            }
        }
    }
    let total: f64 = raw.iter().sum();
    let scores: Vec<f64> = if total > 0.0 {
        raw.iter().map(|g| g / total).collect()
    } else {
        vec![0.0; p]
    };
    let mut ranking: Vec<usize> = (0..p).collect();
    ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ImportanceRanking {
        feature_names: feature_names.to_vec(),
        scores,
        raw_gain: raw,
        ranking,
    }
}

pub fn model_importance(
    model: &TrainedModel,
    feature_names: &[String],
) -> Result<ImportanceRanking> {
    let e = TreeEnsemble::of(model)?;
    Ok(split_gain_importance(e.trees, feature_names))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub phi: Vec<f64>,
    pub base: f64,
}

fn factorials(p: usize) -> Vec<f64> {
    let mut f = vec![1.0; p + 1];
    for i in 1..=p {
        f[i] = f[i - 1] * i as f64;
    }
    f
}

pub fn shap_bruteforce<S: Scorer + ?Sized>(
    model: &S,
    x: &[f64],
    background: &Matrix,
    guard: usize,
) -> Result<Attribution> {
    let p = model.n_features();
    if p > guard {
        return Err(Error::invalid(format!(
            "{p} features exceed the brute-force guard of {guard}"
        )));
    }
    if background.is_empty() {
        return Err(Error::Empty("background set"));
    }
    if x.len() != p || background.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: if x.len() != p {
                x.len()
            } else {
                background.cols()
            },
        });
    }
    let masks = 1usize << p;
    let mut z = vec![0.0; p];
    let v: Vec<f64> = (0..masks)
        .map(|s| {
            let mut acc = 0.0;
            for b in background.iter_rows() {
                for i in 0..p {
                    z[i] = if s >> i & 1 == 1 { x[i] } else { b[i] };
                }
                acc += model.output(&z);
            }
            acc / background.rows() as f64
        })
        .collect();
    let fact = factorials(p);
    let mut phi = vec![0.0; p];
    for s in 0..masks {
        let k = s.count_ones() as usize;
        if k == p {
            continue;
        }
        let w = fact[k] * fact[p - k - 1] / fact[p];
        for (i, ph) in phi.iter_mut().enumerate() {
            if s >> i & 1 == 0 {
                *ph += w * (v[s | 1 << i] - v[s]);
            }
        }
    }
    Ok(Attribution { phi, base: v[0] })
}

struct Walk<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    z: &'a [f64],
    /// 1 = follows x, 2 = follows z, 0 = undecided
    side: Vec<u8>,
    fact: &'a [f64],
}

impl Walk<'_> {
    fn go(&mut self, node: usize, na: usize, nb: usize, scale: f64, phi: &mut [f64]) {
        match &self.tree.nodes[node] {
            Node::Leaf { value, .. } => {
                if na + nb == 0 {
                    return;
                }
                let v = value * scale;
                let f = self.fact;
                let wa = if na > 0 {
                    f[na - 1] * f[nb] / f[na + nb]
                } else {
                    0.0
                };
                let wb = if nb > 0 {
                    f[na] * f[nb - 1] / f[na + nb]
                } else {
                    0.0
                };
                for (i, s) in self.side.iter().enumerate() {
                    match s {
                        1 => phi[i] += v * wa,
                        2 => phi[i] -= v * wb,
                        _ => {}
                    }
                }
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let f = *feature;
                let xl = self.x[f] <= *threshold;
                let zl = self.z[f] <= *threshold;
                let child = |goes_left: bool| if goes_left { *left } else { *right };
                match self.side[f] {
                    1 => self.go(child(xl), na, nb, scale, phi),
                    2 => self.go(child(zl), na, nb, scale, phi),
                    _ if xl == zl => self.go(child(xl), na, nb, scale, phi),
                    _ => {
                        self.side[f] = 1;
                        self.go(child(xl), na + 1, nb, scale, phi);
                        self.side[f] = 2;
                        self.go(child(zl), na, nb + 1, scale, phi);
                        self.side[f] = 0;
                    }
                }
            }
        }
    }
}

/// Interventional Shapley values of a tree ensemble, exact for the same value function as
/// [`shap_bruteforce`].
pub fn shap_tree_fast(
    ens: &TreeEnsemble<'_>,
    x: &[f64],
    background: &Matrix,
) -> Result<Attribution> {
    let p = ens.n_features;
    if background.is_empty() {
        return Err(Error::Empty("background set"));
    }
    if x.len() != p || background.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: if x.len() != p {
                x.len()
            } else {
                background.cols()
            },
        });
    }
    if let Some(t) = ens.trees.iter().find(|t| t.feature_bound() > p) {
        return Err(Error::invalid(format!(
            "tree uses feature {} of {p}",
            t.feature_bound() - 1
        )));
    }
    let fact = factorials(p);
    let mut phi = vec![0.0; p];
    let mut base = 0.0;
    for z in background.iter_rows() {
        for t in ens.trees {
            let mut w = Walk {
                tree: t,
                x,
                z,
                side: vec![0; p],
                fact: &fact,
            };
            w.go(0, 0, 0, ens.weight, &mut phi);
            base += ens.weight * t.predict(z);
        }
    }
    let nb = background.rows() as f64;
    for v in phi.iter_mut() {
        *v /= nb;
    }
    Ok(Attribution {
        phi,
        base: ens.offset + base / nb,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub feature_names: Vec<String>,
    pub phi: Matrix,
    pub base: f64,
    /// Model output per explained row on the explained scale.
    pub outputs: Vec<f64>,
    /// Feature values of the explained rows.
    pub values: Matrix,
    pub sample_ids: Vec<usize>,
}

/// Explains `rows` of `x`, with the fast tree path when available and brute force
/// otherwise.
pub fn explain_rows(
    model: &TrainedModel,
    x: &Matrix,
    rows: &[usize],
    background: &Matrix,
    feature_names: &[String],
    guard: usize,
) -> Result<ShapMatrix> {
    use rayon::prelude::*;
    let ens = TreeEnsemble::of(model).ok();
    let attrs: Vec<Attribution> = rows
        .par_iter()
        .map(|&r| match &ens {
            Some(e) => shap_tree_fast(e, x.row(r), background),
            None => shap_bruteforce(model, x.row(r), background, guard),
        })
        .collect::<Result<_>>()?;
    let base = attrs.first().map_or_else(
        || {
            background.iter_rows().map(|b| model.output(b)).sum::<f64>()
                / background.rows().max(1) as f64
        },
        |a| a.base,
    );
    let phi = Matrix::from_rows(&attrs.iter().map(|a| a.phi.clone()).collect::<Vec<_>>())
        .unwrap_or_else(|_| Matrix::zeros(0, feature_names.len()));
    Ok(ShapMatrix {
        feature_names: feature_names.to_vec(),
        phi,
        base,
        outputs: rows.iter().map(|&r| model.output(x.row(r))).collect(),
        values: x.select_rows(rows),
        sample_ids: rows.to_vec(),
    })
}

/// Seeded uniform sample of at most `n` row indices (sorted).
pub fn sample_background(rows: usize, n: usize, seed: u64) -> Vec<usize> {
    if rows <= n {
        return (0..rows).collect();
    }
    let mut r = rng::stream(seed, "shap-background", 0);
    let mut s = sample(&mut r, rows, n).into_vec();
    s.sort_unstable();
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmRow {
    pub feature: String,
    pub sample_id: usize,
    pub shap_value: f64,
    pub feature_value: f64,
    pub feature_value_percentile: f64,
}

fn percentiles(col: &[f64]) -> Vec<f64> {
    let n = col.len();
    if n <= 1 {
        return vec![0.5; n];
    }
    col.iter()
        .map(|&v| {
            let below = col.iter().filter(|&&u| u < v).count() as f64;
            let equal = col.iter().filter(|&&u| u == v).count() as f64;
            (below + 0.5 * (equal - 1.0)) / (n - 1) as f64
        })
        .collect()
}

pub fn beeswarm_export(s: &ShapMatrix) -> Vec<BeeswarmRow> {
    let p = s.feature_names.len();
    let n = s.phi.rows();
    let mean_abs: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| s.phi.get(i, j).abs()).sum::<f64>() / n.max(1) as f64)
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    let mut out = Vec::with_capacity(n * p);
    for j in order {
        let col = s.values.column(j);
        let pct = percentiles(&col);
        for i in 0..n {
            out.push(BeeswarmRow {
                feature: s.feature_names[j].clone(),
                sample_id: s.sample_ids[i],
                shap_value: s.phi.get(i, j),
                feature_value: col[i],
                feature_value_percentile: pct[i],
            });
        }
    }
    out
}

pub fn write_importance_csv(path: &Path, r: &ImportanceRanking) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "gain_score", "rank"])?;
    for (rank, &j) in r.ranking.iter().enumerate() {
        w.write_record([
            r.feature_names[j].clone(),
            r.scores[j].to_string(),
            (rank + 1).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_shap_csv(path: &Path, rows: &[BeeswarmRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
