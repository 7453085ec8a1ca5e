//! Cluster validity indices.
//!
//! Notation: `n` points in `p` dimensions, `K` clusters with centroids `c_k` and sizes
//! `n_k`, grand mean `x̄`, Euclidean distance `d`.
//!
//! * `W = Σ_k Σ_{i∈k} ‖x_i − c_k‖²` (within-cluster dispersion), `B = Σ_k n_k ‖c_k − x̄‖²`.
//! * **Silhouette**: mean over points of `(b_i − a_i) / max(a_i, b_i)` where `a_i` is the
//!   mean distance to the other members of its cluster and `b_i` the smallest mean
//!   distance to another cluster. Members of singleton clusters score 0. Larger is better.
//! * **Calinski-Harabasz**: `(B / (K − 1)) / (W / (n − K))`. Larger is better.
//! * **Davies-Bouldin**: `(1/K) Σ_k max_{l≠k} (s_k + s_l) / ‖c_k − c_l‖` with `s_k` the mean
//!   distance of cluster `k` to its centroid. Smaller is better.
//! * **Dunn**: smallest distance between points of different clusters divided by the
//!   largest within-cluster diameter. Larger is better.
//! * **C-index**: `(S_w − S_min) / (S_max − S_min)` where `S_w` sums the `N_w`
//!   within-cluster pair distances and `S_min`/`S_max` sum the `N_w` smallest/largest of
//!   all pair distances. Smaller is better.
//! * **McClain-Rao**: `(S_w / N_w) / (S_b / N_b)`, the ratio of mean within-pair to mean
//!   between-pair distance. Smaller is better.
//! * **Point-biserial**: Pearson correlation between pair distance and the indicator
//!   "pair spans two clusters", i.e. `(M_b − M_w) √(N_w N_b) / N_t / s_d` with `s_d` the
//!   population SD of all pair distances. Larger is better.
//! * **Ball-Hall**: `W / K`. K is chosen where the drop `Ball(K−1) − Ball(K)` is largest.
//! * **Hartigan**: `(W_K / W_{K+1} − 1)(n − K − 1)`. K is chosen where the drop
//!   `H(K−1) − H(K)` is largest.
//! * **Krzanowski-Lai**: `|DIFF_K / DIFF_{K+1}|` with
//!   `DIFF_K = (K−1)^{2/p} W_{K−1} − K^{2/p} W_K`. Larger is better.
//!
//! Hartigan and Krzanowski-Lai need the dispersion of neighbouring partitions and are
//! computed from a [`WithinCurve`] rather than a single assignment. Undefined values
//! (e.g. point-biserial without any within-cluster pair) are `NaN`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kmeans::PatternAssignment;
use crate::error::{Error, Result};
use crate::matrix::{dist, sq_dist, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ValidityIndex {
    Silhouette,
    CalinskiHarabasz,
    DaviesBouldin,
    Dunn,
    CIndex,
    McClain,
    PointBiserial,
    Ball,
    Hartigan,
    KrzanowskiLai,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    MaxValue,
    MinValue,
    /// The K maximizing `value(K−1) − value(K)`.
    MaxDrop,
}

impl ValidityIndex {
    pub const ALL: [ValidityIndex; 10] = [
        ValidityIndex::Silhouette,
        ValidityIndex::CalinskiHarabasz,
        ValidityIndex::DaviesBouldin,
        ValidityIndex::Dunn,
        ValidityIndex::CIndex,
        ValidityIndex::McClain,
        ValidityIndex::PointBiserial,
        ValidityIndex::Ball,
        ValidityIndex::Hartigan,
        ValidityIndex::KrzanowskiLai,
    ];

    pub fn rule(self) -> SelectionRule {
        use ValidityIndex::*;
        match self {
            Silhouette | CalinskiHarabasz | Dunn | PointBiserial | KrzanowskiLai => {
                SelectionRule::MaxValue
            }
            DaviesBouldin | CIndex | McClain => SelectionRule::MinValue,
            Ball | Hartigan => SelectionRule::MaxDrop,
        }
    }

    /// Whether the index is computed from pairwise point distances.
    pub fn is_pairwise(self) -> bool {
        use ValidityIndex::*;
        matches!(self, Silhouette | Dunn | CIndex | McClain | PointBiserial)
    }

    pub fn needs_neighbours(self) -> bool {
        matches!(self, ValidityIndex::Hartigan | ValidityIndex::KrzanowskiLai)
    }
}

pub fn centroids_of(x: &Matrix, a: &PatternAssignment) -> Matrix {
    let k = a.k();
    let mut c = Matrix::zeros(k, x.cols());
    for (i, &l) in a.labels.iter().enumerate() {
        for (s, v) in c.row_mut(l).iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for l in 0..k {
        let n = a.sizes[l].max(1) as f64;
        c.row_mut(l).iter_mut().for_each(|v| *v /= n);
    }
    c
}

/// W: total squared distance of points to their cluster mean.
pub fn within_dispersion(x: &Matrix, a: &PatternAssignment) -> f64 {
    let c = centroids_of(x, a);
    a.labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(x.row(i), c.row(l)))
        .sum()
}

fn check(x: &Matrix, a: &PatternAssignment) -> Result<()> {
    if x.rows() != a.len() {
        return Err(Error::invalid(format!(
            "{} points but {} labels",
            x.rows(),
            a.len()
        )));
    }
    if a.k() < 2 {
        return Err(Error::invalid("validity indices need K >= 2"));
    }
    if a.sizes.contains(&0) {
        return Err(Error::invalid("every cluster must be nonempty"));
    }
    Ok(())
}

/// Value of a single-partition index on `(x, a)`. Pairwise indices use every pair of
/// points; see [`PairwiseDistances`] to reuse distances across partitions.
pub fn validity_index(x: &Matrix, a: &PatternAssignment, index: ValidityIndex) -> Result<f64> {
    check(x, a)?;
    use ValidityIndex::*;
    Ok(match index {
        CalinskiHarabasz => calinski_harabasz(x, a),
        DaviesBouldin => davies_bouldin(x, a),
        Ball => within_dispersion(x, a) / a.k() as f64,
        Hartigan | KrzanowskiLai => {
            return Err(Error::Unsupported(format!(
                "{index:?} needs the within-cluster dispersion of neighbouring K; use WithinCurve"
            )))
        }
        _ => {
            let pd = PairwiseDistances::new(x);
            pd.index(&a.labels, index)
        }
    })
}

pub fn calinski_harabasz(x: &Matrix, a: &PatternAssignment) -> f64 {
    let n = x.rows() as f64;
    let k = a.k() as f64;
    let c = centroids_of(x, a);
    let mean = x.column_means();
    let b: f64 = (0..a.k())
        .map(|l| a.sizes[l] as f64 * sq_dist(c.row(l), &mean))
        .sum();
    let w = within_dispersion(x, a);
    (b / (k - 1.0)) / (w / (n - k))
}

pub fn davies_bouldin(x: &Matrix, a: &PatternAssignment) -> f64 {
    let k = a.k();
    let c = centroids_of(x, a);
    let mut scatter = vec![0.0; k];
    for (i, &l) in a.labels.iter().enumerate() {
        scatter[l] += dist(x.row(i), c.row(l));
    }
    for l in 0..k {
        scatter[l] /= a.sizes[l] as f64;
    }
    let total: f64 = (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| (scatter[i] + scatter[j]) / dist(c.row(i), c.row(j)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    total / k as f64
}

/// Condensed upper-triangle distance matrix with sorted prefix sums, so that several
/// partitions of the same points can be scored without recomputing distances.
#[derive(Debug, Clone)]
pub struct PairwiseDistances {
    n: usize,
    d: Vec<f64>,
    sorted_prefix: Vec<f64>,
    total: f64,
    sd: f64,
}

impl PairwiseDistances {
    pub fn new(x: &Matrix) -> Self {
        let n = x.rows();
        let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                d.push(dist(x.row(i), x.row(j)));
            }
        }
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        let mut sorted_prefix = Vec::with_capacity(sorted.len() + 1);
        sorted_prefix.push(0.0);
        let mut acc = 0.0;
        for v in &sorted {
            acc += v;
            sorted_prefix.push(acc);
        }
        let m = d.len() as f64;
        let mean = acc / m;
        let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        Self {
            n,
            d,
            sorted_prefix,
            total: acc,
            sd: var.sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // offset of row i in the condensed layout
        self.d[i * (2 * self.n - i - 1) / 2 + (j - i - 1)]
    }

    /// Within-pair sum and count for `labels`.
    fn within(&self, labels: &[usize]) -> (f64, usize) {
        let mut s = 0.0;
        let mut count = 0;
        let mut idx = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                if labels[i] == labels[j] {
                    s += self.d[idx];
                    count += 1;
                }
                idx += 1;
            }
        }
        (s, count)
    }

    /// Scores a labelling of these points. Labels need not be contiguous; clusters absent
    /// from the labelling are ignored.
    pub fn index(&self, labels: &[usize], index: ValidityIndex) -> f64 {
        assert_eq!(labels.len(), self.n, "one label per point");
        use ValidityIndex::*;
        match index {
            Silhouette => self.silhouette(labels),
            Dunn => self.dunn(labels),
            CIndex => {
                let (sw, nw) = self.within(labels);
                if nw == 0 {
                    return f64::NAN;
                }
                let m = self.d.len();
                let smin = self.sorted_prefix[nw];
                let smax = self.sorted_prefix[m] - self.sorted_prefix[m - nw];
                if smax > smin {
                    (sw - smin) / (smax - smin)
                } else {
                    0.0
                }
            }
            McClain => {
                let (sw, nw) = self.within(labels);
                let nb = self.d.len() - nw;
                let sb = self.total - sw;
                if nw == 0 || nb == 0 || sb <= 0.0 {
                    return f64::NAN;
                }
                (sw / nw as f64) / (sb / nb as f64)
            }
            PointBiserial => {
                let (sw, nw) = self.within(labels);
                let nt = self.d.len();
                let nb = nt - nw;
                if nw == 0 || nb == 0 || self.sd <= 0.0 {
                    return f64::NAN;
                }
                let mw = sw / nw as f64;
                let mb = (self.total - sw) / nb as f64;
                (mb - mw) * ((nw as f64) * (nb as f64)).sqrt() / nt as f64 / self.sd
            }
            other => panic!("{other:?} is not a pairwise index"),
        }
    }

    fn silhouette(&self, labels: &[usize]) -> f64 {
        let present: Vec<usize> = {
            let mut v: Vec<usize> = labels.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        };
        if present.len() < 2 {
            return f64::NAN;
        }
        let slot: BTreeMap<usize, usize> =
            present.iter().enumerate().map(|(s, &l)| (l, s)).collect();
        let mut sizes = vec![0usize; present.len()];
        for l in labels {
            sizes[slot[l]] += 1;
        }
        let mut sums = vec![0.0; present.len()];
        let mut total = 0.0;
        for i in 0..self.n {
            sums.iter_mut().for_each(|s| *s = 0.0);
            for j in 0..self.n {
                if i != j {
                    sums[slot[&labels[j]]] += self.get(i, j);
                }
            }
            let own = slot[&labels[i]];
            if sizes[own] == 1 {
                continue;
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..present.len())
                .filter(|&s| s != own)
                .map(|s| sums[s] / sizes[s] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
        total / self.n as f64
    }

    fn dunn(&self, labels: &[usize]) -> f64 {
        let mut min_between = f64::INFINITY;
        let mut max_diameter: f64 = 0.0;
        let mut idx = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let v = self.d[idx];
                if labels[i] == labels[j] {
                    max_diameter = max_diameter.max(v);
                } else {
                    min_between = min_between.min(v);
                }
                idx += 1;
            }
        }
        if min_between.is_infinite() {
            return f64::NAN;
        }
        if max_diameter == 0.0 {
            return f64::INFINITY;
        }
        min_between / max_diameter
    }
}

/// Within-cluster dispersion `W_K` for consecutive K, the input of the indices that
/// compare neighbouring partitions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WithinCurve {
    pub n: usize,
    pub p: usize,
    pub w: BTreeMap<usize, f64>,
}

impl WithinCurve {
    fn get(&self, k: usize) -> Result<f64> {
        self.w
            .get(&k)
            .copied()
            .ok_or_else(|| Error::invalid(format!("within-dispersion for K={k} missing")))
    }

    pub fn ball(&self, k: usize) -> Result<f64> {
        Ok(self.get(k)? / k as f64)
    }

    pub fn hartigan(&self, k: usize) -> Result<f64> {
        Ok(hartigan(self.get(k)?, self.get(k + 1)?, self.n, k))
    }

    pub fn krzanowski_lai(&self, k: usize) -> Result<f64> {
        if k < 2 {
            return Err(Error::invalid("Krzanowski-Lai needs K >= 2"));
        }
        Ok(krzanowski_lai(
            self.get(k - 1)?,
            self.get(k)?,
            self.get(k + 1)?,
            k,
            self.p,
        ))
    }
}

pub fn hartigan(w_k: f64, w_next: f64, n: usize, k: usize) -> f64 {
    let ratio = if w_next > 0.0 {
        w_k / w_next
    } else if w_k > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    (ratio - 1.0) * (n as f64 - k as f64 - 1.0)
}

pub fn krzanowski_lai(w_prev: f64, w_k: f64, w_next: f64, k: usize, p: usize) -> f64 {
    let e = 2.0 / p as f64;
    let diff = |q: usize, w_before: f64, w_at: f64| {
        ((q - 1) as f64).powf(e) * w_before - (q as f64).powf(e) * w_at
    };
    let num = diff(k, w_prev, w_k);
    let den = diff(k + 1, w_k, w_next);
    if den == 0.0 {
        return if num == 0.0 { f64::NAN } else { f64::INFINITY };
    }
    (num / den).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs(gap: f64) -> (Matrix, PatternAssignment) {
        let rows: Vec<[f64; 2]> = vec![
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [gap, 0.0],
            [gap + 0.1, 0.0],
            [gap, 0.1],
        ];
        (
            Matrix::from_rows(&rows).unwrap(),
            PatternAssignment::from_labels(vec![0, 0, 0, 1, 1, 1], 2).unwrap(),
        )
    }

    #[test]
    fn far_apart_blobs_have_silhouette_near_one() {
        let (x, a) = two_blobs(20.0 * 0.15);
        let s = validity_index(&x, &a, ValidityIndex::Silhouette).unwrap();
        assert!(s >= 0.95, "silhouette {s}");
    }

    #[test]
    fn identical_points_give_tiny_db_and_infinite_dunn() {
        let x = Matrix::from_rows(&[[0.0], [0.0], [5.0], [5.0]]).unwrap();
        let a = PatternAssignment::from_labels(vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(
            validity_index(&x, &a, ValidityIndex::DaviesBouldin).unwrap(),
            0.0
        );
        assert_eq!(
            validity_index(&x, &a, ValidityIndex::Dunn).unwrap(),
            f64::INFINITY
        );
        // one blob tight, the other spread
        let x = Matrix::from_rows(&[[0.0], [0.0], [5.0], [7.0]]).unwrap();
        let db = validity_index(&x, &a, ValidityIndex::DaviesBouldin).unwrap();
        // s = (0, 1), centroid gap 6
        assert!((db - 1.0 / 6.0).abs() < 1e-15);
        let dunn = validity_index(&x, &a, ValidityIndex::Dunn).unwrap();
        assert!((dunn - 2.5).abs() < 1e-15);
    }

    #[test]
    fn singleton_silhouette_is_zero() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [9.0]]).unwrap();
        let a = PatternAssignment::from_labels(vec![0, 0, 1], 2).unwrap();
        let s = validity_index(&x, &a, ValidityIndex::Silhouette).unwrap();
        // points 0 and 1: a=1, b=9 and 8; the singleton contributes 0
        let expected = ((9.0 - 1.0) / 9.0 + (8.0 - 1.0) / 8.0) / 3.0;
        assert!((s - expected).abs() < 1e-15);
    }

    #[test]
    fn neighbour_indices_are_rejected_on_a_single_partition() {
        let (x, a) = two_blobs(3.0);
        assert!(validity_index(&x, &a, ValidityIndex::Hartigan).is_err());
        assert!(validity_index(&x, &a, ValidityIndex::KrzanowskiLai).is_err());
    }

    #[test]
    fn condensed_indexing() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [3.0], [6.0]]).unwrap();
        let pd = PairwiseDistances::new(&x);
        assert_eq!(pd.get(0, 3), 6.0);
        assert_eq!(pd.get(3, 1), 5.0);
        assert_eq!(pd.get(2, 1), 2.0);
    }

    #[test]
    fn hartigan_and_kl_formulas() {
        assert_eq!(hartigan(10.0, 5.0, 12, 2), 9.0);
        // p = 2: DIFF_2 = 1*W1 - 2*W2, DIFF_3 = 2*W2 - 3*W3
        let kl = krzanowski_lai(100.0, 20.0, 10.0, 2, 2);
        assert!((kl - 60.0 / 10.0).abs() < 1e-12);
    }
}
