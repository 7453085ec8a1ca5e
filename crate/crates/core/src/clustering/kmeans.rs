use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Matrix,
    pub k: usize,
    /// Sum of squared Euclidean distances from each point to its nearest centroid.
    pub inertia: f64,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternAssignment {
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl PatternAssignment {
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self> {
        let mut sizes = vec![0; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::invalid(format!("label {l} out of range for K={k}")));
            }
            sizes[l] += 1;
        }
        Ok(Self { labels, sizes })
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row indices carrying each label, in row order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k()];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: KMeansModel,
    pub assignment: PatternAssignment,
    /// Objective after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

impl KMeansFit {
    /// Relabels clusters by decreasing size (ties keep the original order), so pattern 0 is
    /// always the largest group.
    pub fn sorted_by_size(&self) -> KMeansFit {
        let k = self.model.k;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            self.assignment.sizes[b]
                .cmp(&self.assignment.sizes[a])
                .then(a.cmp(&b))
        });
        let mut new_of_old = vec![0; k];
        for (new, &old) in order.iter().enumerate() {
            new_of_old[old] = new;
        }
        let centroids = self.model.centroids.select_rows(&order);
        let labels = self
            .assignment
            .labels
            .iter()
            .map(|&l| new_of_old[l])
            .collect();
        KMeansFit {
            model: KMeansModel {
                centroids,
                ..self.model.clone()
            },
            assignment: PatternAssignment {
                labels,
                sizes: order.iter().map(|&o| self.assignment.sizes[o]).collect(),
            },
            inertia_trace: self.inertia_trace.clone(),
        }
    }
}

/// Index of the nearest centroid; the lowest index wins exact ties.
#[inline]
fn nearest(row: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.rows() {
        let d = sq_dist(row, centroids.row(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

fn assign_all(x: &Matrix, centroids: &Matrix, labels: &mut [usize], d2: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.rows() {
        let (c, d) = nearest(x.row(i), centroids);
        labels[i] = c;
        d2[i] = d;
        total += d;
    }
    total
}

/// Same labels as `assign_all`, but a row keeps its previous centroid without a full scan
/// when that centroid is closer than half the gap to any other centroid.
fn reassign(
    x: &Matrix,
    centroids: &Matrix,
    prev: &[usize],
    labels: &mut [usize],
    d2: &mut [f64],
) -> f64 {
    let k = centroids.rows();
    let mut half_gap = vec![f64::INFINITY; k];
    for a in 0..k {
        for b in 0..k {
            if a != b {
                half_gap[a] = half_gap[a].min(sq_dist(centroids.row(a), centroids.row(b)) / 4.0);
            }
        }
    }
    let mut total = 0.0;
    for i in 0..x.rows() {
        let row = x.row(i);
        let d = sq_dist(row, centroids.row(prev[i]));
        let (c, d) = if d * (1.0 + 1e-9) < half_gap[prev[i]] {
            (prev[i], d)
        } else {
            nearest(row, centroids)
        };
        labels[i] = c;
        d2[i] = d;
        total += d;
    }
    total
}

fn cost(x: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    (0..x.rows())
        .map(|i| sq_dist(x.row(i), centroids.row(labels[i])))
        .sum()
}

fn kmeans_plus_plus(x: &Matrix, k: usize, rng: &mut StreamRng) -> Matrix {
    let n = x.rows();
    let mut centroids = Matrix::zeros(0, 0);
    let first = rng.random_range(0..n);
    centroids.push_row(x.row(first)).unwrap();
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > r {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave r beyond the accumulated total
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        centroids.push_row(x.row(pick)).unwrap();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

struct Restart {
    centroids: Matrix,
    labels: Vec<usize>,
    inertia: f64,
    iterations: usize,
    trace: Vec<f64>,
}

fn lloyd(x: &Matrix, k: usize, cfg: &KMeansConfig, rng: &mut StreamRng) -> Restart {
    let n = x.rows();
    let p = x.cols();
    let mut centroids = kmeans_plus_plus(x, k, rng);
    let mut labels = vec![0usize; n];
    let mut d2 = vec![0.0; n];
    let mut inertia = assign_all(x, &centroids, &mut labels, &mut d2);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    let mut next_labels = vec![0usize; n];

    for it in 1..=cfg.max_iter {
        let mut sums = Matrix::zeros(k, p);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums.row_mut(labels[i]).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut updated = Matrix::zeros(k, p);
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (u, s) in updated.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *u = s * inv;
                }
            } else {
                // empty cluster: move it onto the point farthest from its own centroid
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None::<(usize, f64)>, |best, i| match best {
                        Some((_, bd)) if d2[i] <= bd => best,
                        _ => Some((i, d2[i])),
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                taken[far] = true;
                updated.row_mut(c).copy_from_slice(x.row(far));
            }
        }
        let shift = (0..k)
            .map(|c| sq_dist(centroids.row(c), updated.row(c)))
            .fold(0.0, f64::max)
            .sqrt();
        debug_assert!(
            cost(x, &updated, &labels) <= inertia * (1.0 + 1e-12) + 1e-12,
            "centroid update increased the objective"
        );
        centroids = updated;
        let new_inertia = reassign(x, &centroids, &labels, &mut next_labels, &mut d2);
        debug_assert!(
            new_inertia <= inertia * (1.0 + 1e-12) + 1e-12,
            "Lloyd iteration increased inertia: {inertia} -> {new_inertia}"
        );
        let changed = next_labels != labels;
        std::mem::swap(&mut labels, &mut next_labels);
        inertia = new_inertia;
        trace.push(inertia);
        iterations = it;
        if !changed || shift < cfg.tol {
            break;
        }
    }
    Restart {
        centroids,
        labels,
        inertia,
        iterations,
        trace,
    }
}

/// Lloyd's algorithm with k-means++ seeding, keeping the restart with the lowest inertia
/// (the earliest restart on ties). Restarts draw from independent derived streams, so the
/// result does not depend on how they are scheduled.
pub fn kmeans_fit(x: &Matrix, cfg: &KMeansConfig) -> Result<KMeansFit> {
    if x.is_empty() {
        return Err(Error::Empty("k-means input"));
    }
    if cfg.k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if cfg.k > x.rows() {
        return Err(Error::invalid(format!(
            "K={} exceeds the number of points ({})",
            cfg.k,
            x.rows()
        )));
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("k-means input"));
    }
    let restarts = cfg.restarts.max(1);
    let runs: Vec<Restart> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(cfg.seed, "kmeans-restart", r as u64);
            lloyd(x, cfg.k, cfg, &mut rng)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .unwrap();
    let assignment = PatternAssignment::from_labels(best.labels, cfg.k)?;
    Ok(KMeansFit {
        model: KMeansModel {
            centroids: best.centroids,
            k: cfg.k,
            inertia: best.inertia,
            iterations: best.iterations,
            seed: cfg.seed,
        },
        assignment,
        inertia_trace: best.trace,
    })
}

pub fn assign_patterns(model: &KMeansModel, x: &Matrix) -> Result<PatternAssignment> {
    if x.cols() != model.centroids.cols() {
        return Err(Error::DimensionMismatch {
            expected: model.centroids.cols(),
            got: x.cols(),
        });
    }
    let labels = x
        .iter_rows()
        .map(|r| nearest(r, &model.centroids).0)
        .collect();
    PatternAssignment::from_labels(labels, model.k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Matrix {
        Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]).unwrap()
    }

    #[test]
    fn two_pairs_of_points() {
        let fit = kmeans_fit(&square(), &KMeansConfig::new(2, 3)).unwrap();
        assert_eq!(fit.model.inertia, 1.0);
        let mut c: Vec<Vec<f64>> = fit
            .model
            .centroids
            .iter_rows()
            .map(|r| r.to_vec())
            .collect();
        c.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(c, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let x = square();
        let fit = kmeans_fit(&x, &KMeansConfig::new(1, 0)).unwrap();
        assert_eq!(fit.model.centroids.row(0), &[5.0, 0.5]);
        // n times the total (population) variance: 4 * (25 + 0.25)
        assert!((fit.model.inertia - 101.0).abs() < 1e-12);
    }

    #[test]
    fn k_equal_n_has_zero_inertia() {
        let fit = kmeans_fit(&square(), &KMeansConfig::new(4, 11)).unwrap();
        assert_eq!(fit.model.inertia, 0.0);
    }

    #[test]
    fn errors() {
        assert!(kmeans_fit(&square(), &KMeansConfig::new(5, 0)).is_err());
        assert!(kmeans_fit(&Matrix::zeros(0, 2), &KMeansConfig::new(1, 0)).is_err());
    }

    #[test]
    fn assignment_rules() {
        let model = KMeansModel {
            centroids: Matrix::from_rows(&[[0.0], [2.0]]).unwrap(),
            k: 2,
            inertia: 0.0,
            iterations: 0,
            seed: 0,
        };
        let x = Matrix::from_rows(&[[2.0], [1.0], [0.0]]).unwrap();
        let a = assign_patterns(&model, &x).unwrap();
        assert_eq!(a.labels, vec![1, 0, 0]);
        assert_eq!(a.sizes, vec![2, 1]);
        assert!(assign_patterns(&model, &square()).is_err());
    }

    #[test]
    fn reassignment_reproduces_fit_labels_and_trace_is_monotone() {
        let mut rng = rng::from_seed(5);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|i| {
                let off = (i % 3) as f64 * 4.0;
                vec![off + rng.random::<f64>(), rng.random::<f64>() * 3.0]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let fit = kmeans_fit(&x, &KMeansConfig::new(3, 9)).unwrap();
        assert_eq!(assign_patterns(&fit.model, &x).unwrap(), fit.assignment);
        for w in fit.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert_eq!(*fit.inertia_trace.last().unwrap(), fit.model.inertia);
    }

    #[test]
    fn deterministic_per_seed() {
        let x = square();
        let a = kmeans_fit(&x, &KMeansConfig::new(2, 42)).unwrap();
        let b = kmeans_fit(&x, &KMeansConfig::new(2, 42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [1.0], [2.0]]).unwrap();
        let fit = kmeans_fit(&x, &KMeansConfig::new(3, 0)).unwrap();
        assert_eq!(fit.model.inertia, 0.0);
        assert_eq!(fit.assignment.sizes.iter().sum::<usize>(), 4);
    }

    #[test]
    fn size_order_relabeling() {
        let x = Matrix::from_rows(&[[0.0], [10.0], [10.1], [10.2]]).unwrap();
        let fit = kmeans_fit(&x, &KMeansConfig::new(2, 1))
            .unwrap()
            .sorted_by_size();
        assert_eq!(fit.assignment.sizes, vec![3, 1]);
        assert_eq!(fit.assignment.labels, vec![1, 0, 0, 0]);
        assert_eq!(assign_patterns(&fit.model, &x).unwrap(), fit.assignment);
    }
}
