use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gbt::sigmoid;
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Logistic,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
            Activation::Logistic => sigmoid(v),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Logistic => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub activation: Activation,
    /// L2 penalty: `alpha / (2m) · Σ W²` over a batch of size m.
    pub alpha: f64,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub tol: f64,
    /// Epochs without an improvement of at least `tol` before stopping.
    pub n_iter_no_change: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 100,
            activation: Activation::Tanh,
            alpha: 1e-4,
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            tol: 1e-4,
            n_iter_no_change: 10,
        }
    }
}

/// One hidden layer, sigmoid output. `w1` is hidden × p row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub p: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpModel {
    pub fn init(p: usize, hidden: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let factor = if activation == Activation::Logistic {
            2.0
        } else {
            6.0
        };
        let b_in = (factor / (p + hidden) as f64).sqrt();
        let b_out = (factor / (hidden + 1) as f64).sqrt();
        let mut u = |b: f64| rng.random_range(-b..b);
        let w1 = (0..hidden * p).map(|_| u(b_in)).collect();
        let b1 = (0..hidden).map(|_| u(b_in)).collect();
        let w2 = (0..hidden).map(|_| u(b_out)).collect();
        let b2 = u(b_out);
        Self {
            p,
            hidden,
            activation,
            w1,
            b1,
            w2,
            b2,
        }
    }

    fn hidden_out(&self, x: &[f64], a: &mut [f64]) {
        for (j, aj) in a.iter_mut().enumerate() {
            let w = &self.w1[j * self.p..(j + 1) * self.p];
            let pre = self.b1[j] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            *aj = self.activation.apply(pre);
        }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        let mut a = vec![0.0; self.hidden];
        self.hidden_out(x, &mut a);
        self.b2 + self.w2.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>()
    }

    /// All parameters in the order w1, b1, w2, b2.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.w1.clone();
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let (hp, h) = (self.hidden * self.p, self.hidden);
        self.w1.copy_from_slice(&v[..hp]);
        self.b1.copy_from_slice(&v[hp..hp + h]);
        self.w2.copy_from_slice(&v[hp + h..hp + 2 * h]);
        self.b2 = v[hp + 2 * h];
    }
}

/// Mean logistic loss plus `alpha/(2m)·Σ W²` over the rows `rows` of `x`, with the
/// gradient in [`MlpModel::flat`] order.
pub fn mlp_objective(
    m: &MlpModel,
    x: &Matrix,
    y: &[u8],
    rows: &[usize],
    alpha: f64,
) -> (f64, Vec<f64>) {
    let (hp, h) = (m.hidden * m.p, m.hidden);
    let mut g = vec![0.0; hp + 2 * h + 1];
    let mut a = vec![0.0; h];
    let mut loss = 0.0;
    for &r in rows {
        let xr = x.row(r);
        m.hidden_out(xr, &mut a);
        let z = m.b2 + m.w2.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
        let t = y[r] as f64;
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss += softplus - t * z;
        let dz = sigmoid(z) - t;
        for j in 0..h {
            g[hp + h + j] += dz * a[j];
            let dpre = dz * m.w2[j] * m.activation.derivative(a[j]);
            g[hp + j] += dpre;
            for (gk, xk) in g[j * m.p..(j + 1) * m.p].iter_mut().zip(xr) {
                *gk += dpre * xk;
            }
        }
        g[hp + 2 * h] += dz;
    }
    let n = rows.len() as f64;
    for v in g.iter_mut() {
        *v /= n;
    }
    let sq: f64 = m.w1.iter().chain(&m.w2).map(|w| w * w).sum();
    for (gk, w) in g[..hp].iter_mut().zip(&m.w1) {
        *gk += alpha * w / n;
    }
    for (gk, w) in g[hp + h..hp + 2 * h].iter_mut().zip(&m.w2) {
        *gk += alpha * w / n;
    }
    (loss / n + alpha * sq / (2.0 * n), g)
}

pub(crate) struct MlpFit {
    pub model: MlpModel,
    pub epochs: usize,
    pub loss_trace: Vec<f64>,
}

pub(crate) fn fit_mlp(x: &Matrix, y: &[u8], params: &MlpParams, seed: u64) -> MlpFit {
    let mut r = rng::stream(seed, "mlp", 0);
    let mut model = MlpModel::init(x.cols(), params.hidden, params.activation, &mut r);
    let mut theta = model.flat();
    let mut m1 = vec![0.0; theta.len()];
    let mut m2 = vec![0.0; theta.len()];
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let bs = params.batch_size.clamp(1, x.rows().max(1));
    for _ in 0..params.max_epochs {
        order.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(bs) {
            model.set_flat(&theta);
            let (loss, g) = mlp_objective(&model, x, y, batch, params.alpha);
            epoch_loss += loss * batch.len() as f64;
            match params.optimizer {
                Optimizer::Sgd => {
                    for (t, gi) in theta.iter_mut().zip(&g) {
                        *t -= params.learning_rate * gi;
                    }
                }
                Optimizer::Adam => {
                    step += 1;
                    let lr =
                        params.learning_rate * (1.0 - b2.powi(step)).sqrt() / (1.0 - b1.powi(step));
                    for i in 0..theta.len() {
                        m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
                        m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
                        theta[i] -= lr * m1[i] / (m2[i].sqrt() + eps);
                    }
                }
            }
        }
        let epoch_loss = epoch_loss / x.rows() as f64;
        trace.push(epoch_loss);
        if epoch_loss > best - params.tol {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(epoch_loss);
        if stale >= params.n_iter_no_change {
            break;
        }
    }
    model.set_flat(&theta);
    MlpFit {
        model,
        epochs: trace.len(),
        loss_trace: trace,
    }
}
