use serde::{Deserialize, Serialize};

use super::gbt::sigmoid;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    /// Inverse regularization strength: the penalty is `‖w‖² / (2·c·n)`.
    pub c: f64,
    /// Stop once every gradient component is at most this in absolute value.
    pub tol: f64,
    /// Newton iterations.
    pub max_iter: usize,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Objective value with its gradient in `w` and in the bias.
pub fn logistic_objective(w: &[f64], b: f64, x: &Matrix, y: &[u8], c: f64) -> (f64, Vec<f64>, f64) {
    let n = x.rows() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &t) in x.iter_rows().zip(y) {
        let z = b + w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>();
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss += softplus - t as f64 * z;
        let r = sigmoid(z) - t as f64;
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
        gb += r;
    }
    let reg = w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c * n);
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + wi / (c * n);
    }
    (loss / n + reg, gw, gb / n)
}

pub(crate) struct LrFit {
    pub model: LogisticModel,
    pub iterations: usize,
    pub loss_trace: Vec<f64>,
}

/// Damped Newton iterations from zero weights; the bias is not penalized.
pub(crate) fn fit_logistic(x: &Matrix, y: &[u8], params: &LrParams) -> LrFit {
    use nalgebra::{DMatrix, DVector};
    let p = x.cols();
    let n = x.rows() as f64;
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let (mut loss, mut gw, mut gb) = logistic_objective(&w, b, x, y, params.c);
    let mut trace = vec![loss];
    let mut iterations = 0;
    let grad_max = |gw: &[f64], gb: f64| gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
    while iterations < params.max_iter && grad_max(&gw, gb) > params.tol {
        // Hessian over (w, b)
        let mut h = DMatrix::<f64>::zeros(p + 1, p + 1);
        let mut z = vec![0.0; p + 1];
        for row in x.iter_rows() {
            let s = sigmoid(b + w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>());
            let q = s * (1.0 - s);
            z[..p].copy_from_slice(row);
            z[p] = 1.0;
            for i in 0..=p {
                let qi = q * z[i];
                for j in 0..=i {
                    h[(i, j)] += qi * z[j];
                }
            }
        }
        for i in 0..=p {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
        }
        h /= n;
        for i in 0..p {
            h[(i, i)] += 1.0 / (params.c * n);
        }
        let g = DVector::from_iterator(p + 1, gw.iter().copied().chain([gb]));
        let mut jitter = 0.0;
        let dir = loop {
            let mut hj = h.clone();
            for i in 0..=p {
                hj[(i, i)] += jitter;
            }
            if let Some(ch) = hj.cholesky() {
                break -ch.solve(&g);
            }
            jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        };
        let slope = g.dot(&dir);
        let mut t = 1.0;
        let (nw, nb, nl, ngw, ngb) = loop {
            let nw: Vec<f64> = w.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            let nb = b + t * dir[p];
            let (nl, ngw, ngb) = logistic_objective(&nw, nb, x, y, params.c);
            if nl <= loss + 1e-4 * t * slope || t < 1e-10 {
                break (nw, nb, nl, ngw, ngb);
            }
            t *= 0.5;
        };
        iterations += 1;
        if nl > loss {
            break;
        }
        (w, b, loss, gw, gb) = (nw, nb, nl, ngw, ngb);
        trace.push(loss);
    }
    LrFit {
        model: LogisticModel {
            weights: w,
            bias: b,
        },
        iterations,
        loss_trace: trace,
    }
}
