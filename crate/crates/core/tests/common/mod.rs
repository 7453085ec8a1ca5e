//! Reference implementations written straight from textbook definitions, sharing no code
//! with the library. Slow on purpose.
#![allow(dead_code)]

use rand::Rng;
use stratify_core::rng::StreamRng;

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn random_points(rng: &mut StreamRng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect()
}

/// Random labels in `0..k` with every label used at least once (requires `n >= k`).
pub fn random_labels(rng: &mut StreamRng, n: usize, k: usize) -> Vec<usize> {
    loop {
        let l: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if (0..k).all(|c| l.contains(&c)) {
            return l;
        }
    }
}

// ---------- metrics ----------

/// (accuracy, precision, recall, F1) with 0 for an empty denominator.
pub fn hand_metrics(tp: u64, fp: u64, fn_: u64, tn: u64) -> (f64, f64, f64, f64) {
    let total = (tp + fp + fn_ + tn) as f64;
    let accuracy = (tp + tn) as f64 / total;
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if tp + fp == 0 || tp + fn_ == 0 || precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (accuracy, precision, recall, f1)
}

/// Probability that a random positive outscores a random negative, ties counting half.
pub fn mann_whitney_auc(y: &[u8], s: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                if s[i] > s[j] {
                    wins += 1.0;
                } else if s[i] == s[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

// ---------- k-means ----------

pub fn partition_cost(x: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let p = x[0].len();
    let mut cost = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = x
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(r, _)| r)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..p)
            .map(|j| members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64)
            .collect();
        cost += members
            .iter()
            .map(|r| euclid(r, &mean).powi(2))
            .sum::<f64>();
    }
    cost
}

/// Smallest within-cluster sum of squares over every split of the points into two
/// nonempty groups.
pub fn optimal_two_means(x: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let mut best = f64::INFINITY;
    // point 0 stays in group 0, which enumerates each unordered split once
    for mask in 1u32..(1 << (n - 1)) {
        let labels: Vec<usize> = (0..n)
            .map(|i| {
                if i == 0 {
                    0
                } else {
                    ((mask >> (i - 1)) & 1) as usize
                }
            })
            .collect();
        best = best.min(partition_cost(x, &labels, 2));
    }
    best
}

// ---------- validity indices ----------

fn clusters(labels: &[usize]) -> Vec<usize> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

fn centroid(x: &[Vec<f64>], labels: &[usize], c: usize) -> Vec<f64> {
    let m: Vec<&Vec<f64>> = x
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == c)
        .map(|(r, _)| r)
        .collect();
    (0..x[0].len())
        .map(|j| m.iter().map(|r| r[j]).sum::<f64>() / m.len() as f64)
        .collect()
}

pub fn silhouette(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let cs = clusters(labels);
    let n = x.len();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| euclid(&x[i], &x[j])).sum::<f64>() / own.len() as f64;
        let b = cs
            .iter()
            .filter(|&&c| c != labels[i])
            .map(|&c| {
                let m: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                m.iter().map(|&j| euclid(&x[i], &x[j])).sum::<f64>() / m.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

pub fn within(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = clusters(labels).len();
    partition_cost(x, labels, k.max(*labels.iter().max().unwrap() + 1))
}

pub fn calinski_harabasz(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = x.len() as f64;
    let cs = clusters(labels);
    let k = cs.len() as f64;
    let grand: Vec<f64> = (0..x[0].len())
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let b: f64 = cs
        .iter()
        .map(|&c| {
            labels.iter().filter(|&&l| l == c).count() as f64
                * euclid(&centroid(x, labels, c), &grand).powi(2)
        })
        .sum();
    (b / (k - 1.0)) / (within(x, labels) / (n - k))
}

pub fn davies_bouldin(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let cs = clusters(labels);
    let cents: Vec<Vec<f64>> = cs.iter().map(|&c| centroid(x, labels, c)).collect();
    let scat: Vec<f64> = cs
        .iter()
        .zip(&cents)
        .map(|(&c, m)| {
            let d: Vec<f64> = x
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| euclid(r, m))
                .collect();
            d.iter().sum::<f64>() / d.len() as f64
        })
        .collect();
    let k = cs.len();
    (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| (scat[i] + scat[j]) / euclid(&cents[i], &cents[j]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / k as f64
}

/// All unordered pairs as (distance, same cluster).
fn pairs(x: &[Vec<f64>], labels: &[usize]) -> Vec<(f64, bool)> {
    let mut v = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            v.push((euclid(&x[i], &x[j]), labels[i] == labels[j]));
        }
    }
    v
}

pub fn dunn(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let ps = pairs(x, labels);
    let sep = ps
        .iter()
        .filter(|p| !p.1)
        .map(|p| p.0)
        .fold(f64::INFINITY, f64::min);
    let diam = ps.iter().filter(|p| p.1).map(|p| p.0).fold(0.0, f64::max);
    sep / diam
}

pub fn c_index(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let ps = pairs(x, labels);
    let nw = ps.iter().filter(|p| p.1).count();
    let sw: f64 = ps.iter().filter(|p| p.1).map(|p| p.0).sum();
    let mut all: Vec<f64> = ps.iter().map(|p| p.0).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let smin: f64 = all[..nw].iter().sum();
    let smax: f64 = all[all.len() - nw..].iter().sum();
    (sw - smin) / (smax - smin)
}

pub fn mcclain_rao(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let ps = pairs(x, labels);
    let w: Vec<f64> = ps.iter().filter(|p| p.1).map(|p| p.0).collect();
    let b: Vec<f64> = ps.iter().filter(|p| !p.1).map(|p| p.0).collect();
    (w.iter().sum::<f64>() / w.len() as f64) / (b.iter().sum::<f64>() / b.len() as f64)
}

/// Pearson correlation of pair distance with the between-cluster indicator.
pub fn point_biserial(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let ps = pairs(x, labels);
    let n = ps.len() as f64;
    let d: Vec<f64> = ps.iter().map(|p| p.0).collect();
    let t: Vec<f64> = ps.iter().map(|p| if p.1 { 0.0 } else { 1.0 }).collect();
    let md = d.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let cov: f64 = d
        .iter()
        .zip(&t)
        .map(|(a, b)| (a - md) * (b - mt))
        .sum::<f64>()
        / n;
    let sd = (d.iter().map(|a| (a - md).powi(2)).sum::<f64>() / n).sqrt();
    let st = (t.iter().map(|b| (b - mt).powi(2)).sum::<f64>() / n).sqrt();
    cov / (sd * st)
}

pub fn ball_hall(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    within(x, labels) / clusters(labels).len() as f64
}

pub fn hartigan(w_k: f64, w_next: f64, n: usize, k: usize) -> f64 {
    (w_k / w_next - 1.0) * (n - k - 1) as f64
}

pub fn krzanowski_lai(w: [f64; 3], k: usize, p: usize) -> f64 {
    let e = 2.0 / p as f64;
    let diff_k = ((k - 1) as f64).powf(e) * w[0] - (k as f64).powf(e) * w[1];
    let diff_next = (k as f64).powf(e) * w[1] - ((k + 1) as f64).powf(e) * w[2];
    (diff_k / diff_next).abs()
}

// ---------- SMOTE ----------

/// Indices of the `k` nearest rows of `pool` to `pool[i]` (itself excluded; ties by index).
pub fn knn_in(pool: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = (0..pool.len())
        .filter(|&j| j != i)
        .map(|j| (euclid(&pool[i], &pool[j]), j))
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

// ---------- gradients ----------

/// Central difference of `f` at `w` along coordinate `i`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, w: &[f64], i: usize, h: f64) -> f64 {
    let mut a = w.to_vec();
    let mut b = w.to_vec();
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Minimizer of `w ↦ g·w + ½(h+λ)w²`, read off the parabola through three evaluations.
pub fn quadratic_vertex(g: f64, h: f64, lambda: f64) -> f64 {
    let q = |w: f64| g * w + 0.5 * (h + lambda) * w * w;
    let (a, b, c) = (q(-1.0), q(0.0), q(1.0));
    -(c - a) / (2.0 * (a - 2.0 * b + c))
}

// ---------- Shapley ----------

/// Interventional Shapley values by enumerating every coalition:
/// v(S) = mean over background z of f(x_S, z_rest).
pub fn shapley(f: &dyn Fn(&[f64]) -> f64, x: &[f64], background: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let p = x.len();
    let fact = |m: usize| (1..=m).map(|v| v as f64).product::<f64>();
    let value = |mask: u32| {
        background
            .iter()
            .map(|z| {
                let row: Vec<f64> = (0..p)
                    .map(|j| if mask >> j & 1 == 1 { x[j] } else { z[j] })
                    .collect();
                f(&row)
            })
            .sum::<f64>()
            / background.len() as f64
    };
    let mut phi = vec![0.0; p];
    for i in 0..p {
        for mask in 0u32..(1 << p) {
            if mask >> i & 1 == 1 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact(s) * fact(p - s - 1) / fact(p);
            phi[i] += w * (value(mask | 1 << i) - value(mask));
        }
    }
    (phi, value(0))
}
