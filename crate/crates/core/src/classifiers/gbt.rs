//! Second-order gradient boosting on the logistic loss.

use serde::{Deserialize, Serialize};

use super::tree::{grow, Criterion, GrowLimits, Presorted, Stats, Tree};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub max_depth: usize,
    pub n_estimators: usize,
    /// Upper bound on boosting rounds; the smaller of this and `n_estimators` applies.
    pub max_iterations: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Minimum hessian sum per child (0 disables the check).
    pub min_child_weight: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            n_estimators: 100,
            max_iterations: 100,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 0.0,
        }
    }
}

impl GbtParams {
    pub fn rounds(&self) -> usize {
        self.n_estimators.min(self.max_iterations)
    }
}

/// Trees on the margin (log-odds) scale; the score is `σ(base_margin + Σ trees)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_margin: f64,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base_margin, |m, t| m + t.predict(x))
    }
}

/// Minimizer of `G·w + ½(H + λ)·w²`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss of margins `m` against labels `y`.
pub fn logloss_from_margins(m: &[f64], y: &[u8]) -> f64 {
    let s: f64 = m
        .iter()
        .zip(y)
        .map(|(&z, &t)| {
            // log(1 + e^z) − t·z, stable for large |z|
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - t as f64 * z
        })
        .sum();
    s / m.len() as f64
}

struct SecondOrder<'a> {
    grad: &'a [f64],
    hess: &'a [f64],
    p: &'a GbtParams,
}

impl Criterion for SecondOrder<'_> {
    fn row_stats(&self, row: usize) -> Stats {
        Stats {
            a: self.grad[row],
            b: self.hess[row],
            count: 1.0,
        }
    }
    fn leaf_value(&self, s: &Stats) -> f64 {
        self.p.learning_rate * leaf_weight(s.a, s.b, self.p.lambda)
    }
    fn gain(&self, _parent: &Stats, l: &Stats, r: &Stats) -> f64 {
        split_gain(l.a, l.b, r.a, r.b, self.p.lambda, self.p.gamma)
    }
    fn can_split(&self, s: &Stats) -> bool {
        s.b >= 2.0 * self.p.min_child_weight
    }
    fn child_ok(&self, s: &Stats) -> bool {
        s.b >= self.p.min_child_weight
    }
}

pub(crate) struct GbtFit {
    pub model: GbtModel,
    /// Training loss before the first round and after each round.
    pub loss_trace: Vec<f64>,
}

pub(crate) fn fit_gbt(x: &Matrix, y: &[u8], params: &GbtParams) -> GbtFit {
    let n = x.rows();
    let pre = Presorted::new(x);
    let limits = GrowLimits {
        max_depth: Some(params.max_depth),
        min_samples_split: 2,
        min_samples_leaf: 1,
        max_features: None,
    };
    let base_margin = 0.0;
    let mut margins = vec![base_margin; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.rounds());
    let mut loss_trace = vec![logloss_from_margins(&margins, y)];
    for _ in 0..params.rounds() {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - y[i] as f64;
            hess[i] = p * (1.0 - p);
        }
        let crit = SecondOrder {
            grad: &grad,
            hess: &hess,
            p: params,
        };
        let grown = grow(&crit, x, &pre, None, &limits, None);
        for (m, &leaf) in margins.iter_mut().zip(&grown.leaf_of_row) {
            if let super::tree::Node::Leaf { value, .. } = grown.tree.nodes[leaf] {
                *m += value;
            }
        }
        trees.push(grown.tree);
        loss_trace.push(logloss_from_margins(&margins, y));
    }
    GbtFit {
        model: GbtModel { base_margin, trees },
        loss_trace,
    }
}
