//! Soft-margin SVM dual solved by SMO with maximal-violating-pair / second-order working
//! set selection.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::gbt::sigmoid;
use crate::matrix::{sq_dist, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvcParams {
    pub c: f64,
    pub kernel: Kernel,
    /// `None` means `1 / (p · Var(X))` over all entries of the training matrix.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: Option<usize>,
    /// Kernel row cache budget in MiB.
    pub cache_mb: usize,
}

impl Default for SvcParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            kernel: Kernel::Rbf,
            gamma: None,
            tol: 1e-3,
            max_iter: None,
            cache_mb: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    pub kernel: Kernel,
    pub gamma: f64,
    pub support: Matrix,
    /// `α_i · y_i` with y in {−1, +1}, one per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
}

impl SvcModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter_rows()
            .zip(&self.coef)
            .map(|(s, c)| c * kernel(self.kernel, self.gamma, s, x))
            .sum::<f64>()
            + self.bias
    }

    /// Not calibrated: the logistic squashing of the decision value.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

pub fn kernel(k: Kernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match k {
        Kernel::Rbf => (-gamma * sq_dist(a, b)).exp(),
        Kernel::Linear => a.iter().zip(b).map(|(u, v)| u * v).sum(),
    }
}

pub fn scale_gamma(x: &Matrix) -> f64 {
    let data = x.as_slice();
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.cols() as f64 * var)
    } else {
        1.0
    }
}

struct RowCache<'a> {
    x: &'a Matrix,
    kernel: Kernel,
    gamma: f64,
    cap: usize,
    rows: HashMap<usize, Vec<f64>>,
    fifo: VecDeque<usize>,
}

impl RowCache<'_> {
    fn row(&mut self, i: usize) -> &[f64] {
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.cap {
                if let Some(old) = self.fifo.pop_front() {
                    self.rows.remove(&old);
                }
            }
            let xi = self.x.row(i);
            let r = self
                .x
                .iter_rows()
                .map(|xt| kernel(self.kernel, self.gamma, xi, xt))
                .collect();
            self.rows.insert(i, r);
            self.fifo.push_back(i);
        }
        &self.rows[&i]
    }
}

pub struct SvcFit {
    pub model: SvcModel,
    pub iterations: usize,
    pub alpha: Vec<f64>,
    /// Final dual objective `½αᵀQα − Σα`.
    pub objective: f64,
}

const TAU: f64 = 1e-12;

pub fn fit_svc(x: &Matrix, y01: &[u8], params: &SvcParams) -> SvcFit {
    let n = x.rows();
    let c = params.c;
    let gamma = params.gamma.unwrap_or_else(|| scale_gamma(x));
    let y: Vec<f64> = y01
        .iter()
        .map(|&v| if v == 1 { 1.0 } else { -1.0 })
        .collect();
    let diag: Vec<f64> = x
        .iter_rows()
        .map(|r| kernel(params.kernel, gamma, r, r))
        .collect();
    let cap = (params.cache_mb * (1 << 20) / (8 * n.max(1))).max(2);
    let mut cache = RowCache {
        x,
        kernel: params.kernel,
        gamma,
        cap,
        rows: HashMap::new(),
        fifo: VecDeque::new(),
    };
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = params.max_iter.unwrap_or((100 * n).max(10_000_000));
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break;
        }
        let ki = cache.row(i).to_vec();
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let mut a = diag[i] + diag[t] - 2.0 * ki[t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -b * b / a;
                if obj < best_obj {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        if gmax - gmin < params.tol || j == usize::MAX {
            break;
        }
        iterations += 1;
        let kj = cache.row(j).to_vec();
        let (ai, aj) = (alpha[i], alpha[j]);
        let mut quad = diag[i] + diag[j] - 2.0 * ki[j];
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (dai, daj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * dai + y[j] * kj[t] * daj);
        }
    }

    // bias from free vectors, else the midpoint of the feasible interval
    let (mut sum, mut nfree) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += yg;
            nfree += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if nfree > 0 {
        sum / nfree as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    let objective = alpha
        .iter()
        .zip(&grad)
        .map(|(a, g)| a * (g - 1.0))
        .sum::<f64>()
        / 2.0;

    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let model = SvcModel {
        kernel: params.kernel,
        gamma,
        support: x.select_rows(&sv),
        coef: sv.iter().map(|&t| alpha[t] * y[t]).collect(),
        bias: -rho,
    };
    SvcFit {
        model,
        iterations,
        alpha,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_pair() {
        let x = Matrix::from_rows(&[[-1.0], [1.0]]).unwrap();
        let fit = fit_svc(
            &x,
            &[0, 1],
            &SvcParams {
                c: 10.0,
                kernel: Kernel::Linear,
                ..Default::default()
            },
        );
        // hard-margin solution: w = 1, b = 0, α = 0.5 each
        assert!((fit.alpha[0] - 0.5).abs() < 1e-9);
        assert!(fit.model.bias.abs() < 1e-9);
        assert!(fit.model.decision(&[2.0]) > 0.0);
    }

    #[test]
    fn kkt_on_random_separable_sets() {
        use rand::Rng;
        let mut r = crate::rng::from_seed(21);
        for _ in 0..20 {
            let n = r.random_range(6..40);
            let rows: Vec<[f64; 2]> = (0..n)
                .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
                .collect();
            let y: Vec<u8> = rows
                .iter()
                .map(|v| (v[0] + 0.5 * v[1] > 0.0) as u8)
                .collect();
            if y.iter().all(|&v| v == y[0]) {
                continue;
            }
            let x = Matrix::from_rows(&rows).unwrap();
            let c = 5.0;
            let fit = fit_svc(
                &x,
                &y,
                &SvcParams {
                    c,
                    ..Default::default()
                },
            );
            for (i, row) in x.iter_rows().enumerate() {
                let yi = if y[i] == 1 { 1.0 } else { -1.0 };
                let m = yi * fit.model.decision(row);
                let a = fit.alpha[i];
                if a <= 0.0 {
                    assert!(m >= 1.0 - 1e-3, "alpha=0 margin {m}");
                } else if a >= c {
                    assert!(m <= 1.0 + 1e-3, "alpha=C margin {m}");
                } else {
                    assert!((m - 1.0).abs() <= 1e-3, "free margin {m}");
                }
            }
        }
    }

    #[test]
    fn scale_gamma_convention() {
        let x = Matrix::from_rows(&[[0.0, 2.0], [2.0, 0.0]]).unwrap();
        // all entries: mean 1, variance 1
        assert_eq!(scale_gamma(&x), 0.5);
    }
}
