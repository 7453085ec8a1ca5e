use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::indices::{
    calinski_harabasz, davies_bouldin, within_dispersion, PairwiseDistances, SelectionRule,
    ValidityIndex, WithinCurve,
};
use super::kmeans::{kmeans_fit, KMeansConfig, KMeansFit};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub indices: Vec<ValidityIndex>,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Pairwise indices are computed on a seeded uniform subsample of at most this many
    /// rows (shared by every K).
    pub pairwise_sample: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 8,
            indices: ValidityIndex::ALL.to_vec(),
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
            pairwise_sample: 2000,
        }
    }
}

impl SelectConfig {
    pub fn kmeans_config(&self, k: usize, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k,
            restarts: self.restarts,
            max_iter: self.max_iter,
            tol: self.tol,
            seed: kmeans_seed(seed, k),
        }
    }
}

/// Seed of the K-means fit for a given K, shared by selection and fixed-K runs.
pub fn kmeans_seed(seed: u64, k: usize) -> u64 {
    rng::derive_seed(seed, "kmeans", k as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub k_min: usize,
    pub k_max: usize,
    /// index -> K -> value, for every K in range.
    pub values: BTreeMap<ValidityIndex, BTreeMap<usize, Real>>,
    /// index -> chosen K, or `None` when the index was undefined for every K.
    pub votes: BTreeMap<ValidityIndex, Option<usize>>,
    pub tally: BTreeMap<usize, usize>,
    pub winner: usize,
    pub within_dispersion: BTreeMap<usize, f64>,
    pub pairwise_rows: usize,
}

#[derive(Debug, Clone)]
pub struct KSelection {
    pub report: KSelectionReport,
    /// Fits for K in `[k_min − 1, k_max + 1]`.
    pub fits: BTreeMap<usize, KMeansFit>,
}

/// Majority vote with ties going to the smaller K. `None` when nobody voted.
pub fn tally_votes(votes: &[Option<usize>]) -> Option<(usize, BTreeMap<usize, usize>)> {
    let mut tally = BTreeMap::new();
    for k in votes.iter().flatten() {
        *tally.entry(*k).or_insert(0usize) += 1;
    }
    let mut best: Option<(usize, usize)> = None;
    for (&k, &c) in &tally {
        // BTreeMap iterates K ascending, so strict > keeps the smaller K on ties
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| (k, tally))
}

fn choose(
    rule: SelectionRule,
    values: &BTreeMap<usize, f64>,
    before_first: Option<f64>,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut prev = before_first;
    for (&k, &v) in values {
        let score = match rule {
            SelectionRule::MaxValue => v,
            SelectionRule::MinValue => -v,
            SelectionRule::MaxDrop => match prev {
                Some(p) => p - v,
                None => f64::NAN,
            },
        };
        prev = Some(v);
        if score.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k)
}

/// Fits K-means for every K in range (plus the neighbours some indices need), scores each
/// partition with every requested index, and lets the indices vote.
pub fn select_k(x: &Matrix, cfg: &SelectConfig, seed: u64) -> Result<KSelection> {
    if cfg.indices.is_empty() {
        return Err(Error::invalid("index set is empty"));
    }
    let n = x.rows();
    if cfg.k_min < 2 || cfg.k_max < cfg.k_min || cfg.k_max + 1 > n {
        return Err(Error::invalid(format!(
            "K range {}..={} must lie within [2, n-1] with n={n}",
            cfg.k_min, cfg.k_max
        )));
    }

    let mut fits = BTreeMap::new();
    let mut curve = WithinCurve {
        n,
        p: x.cols(),
        w: BTreeMap::new(),
    };
    for k in cfg.k_min - 1..=cfg.k_max + 1 {
        let fit = kmeans_fit(x, &cfg.kmeans_config(k, seed))?;
        curve.w.insert(k, within_dispersion(x, &fit.assignment));
        fits.insert(k, fit);
    }

    let sample_rows: Vec<usize> = if n <= cfg.pairwise_sample {
        (0..n).collect()
    } else {
        let mut r = rng::stream(seed, "pairwise-sample", 0);
        let mut s = sample(&mut r, n, cfg.pairwise_sample).into_vec();
        s.sort_unstable();
        s
    };
    let needs_pairs = cfg.indices.iter().any(|i| i.is_pairwise());
    let pairs = needs_pairs.then(|| PairwiseDistances::new(&x.select_rows(&sample_rows)));

    let mut values: BTreeMap<ValidityIndex, BTreeMap<usize, f64>> = BTreeMap::new();
    for &index in &cfg.indices {
        let mut per_k = BTreeMap::new();
        for k in cfg.k_min..=cfg.k_max {
            let a = &fits[&k].assignment;
            let v = if a.sizes.contains(&0) {
                f64::NAN
            } else {
                match index {
                    ValidityIndex::CalinskiHarabasz => calinski_harabasz(x, a),
                    ValidityIndex::DaviesBouldin => davies_bouldin(x, a),
                    ValidityIndex::Ball => curve.ball(k)?,
                    ValidityIndex::Hartigan => curve.hartigan(k)?,
                    ValidityIndex::KrzanowskiLai => curve.krzanowski_lai(k)?,
                    pairwise => {
                        let labels: Vec<usize> = sample_rows.iter().map(|&i| a.labels[i]).collect();
                        pairs.as_ref().unwrap().index(&labels, pairwise)
                    }
                }
            };
            per_k.insert(k, v);
        }
        values.insert(index, per_k);
    }

    let mut votes = BTreeMap::new();
    for (&index, per_k) in &values {
        let before_first = match index {
            ValidityIndex::Ball => Some(curve.ball(cfg.k_min - 1)?),
            ValidityIndex::Hartigan => Some(curve.hartigan(cfg.k_min - 1)?),
            _ => None,
        };
        votes.insert(index, choose(index.rule(), per_k, before_first));
    }
    let vote_list: Vec<Option<usize>> = votes.values().copied().collect();
    let (winner, tally) = tally_votes(&vote_list)
        .ok_or_else(|| Error::degenerate("no validity index was defined for any K"))?;

    let report = KSelectionReport {
        k_min: cfg.k_min,
        k_max: cfg.k_max,
        values: values
            .into_iter()
            .map(|(i, m)| (i, m.into_iter().map(|(k, v)| (k, Real(v))).collect()))
            .collect(),
        votes,
        tally,
        winner,
        within_dispersion: curve.w,
        pairwise_rows: sample_rows.len(),
    };
    Ok(KSelection { report, fits })
}
