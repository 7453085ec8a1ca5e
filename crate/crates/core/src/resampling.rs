//! SMOTE oversampling of the minority class.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Desired minority/majority count ratio after resampling.
    pub target_ratio: f64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            target_ratio: 1.0,
        }
    }
}

/// Where a synthetic row came from: `row = parent + gap * (neighbor - parent)`.
/// Indices refer to rows of the input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub parent: usize,
    pub neighbor: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampledTrainingSet {
    pub x: Matrix,
    pub y: Vec<u8>,
    /// One flag per row; originals come first and are never synthetic.
    pub synthetic: Vec<bool>,
    /// Provenance of each synthetic row, in order.
    pub provenance: Vec<Provenance>,
    pub minority_class: u8,
    /// Set when the minority class had a single row and was duplicated instead.
    pub duplicated_fallback: bool,
    pub seed: u64,
}

impl ResampledTrainingSet {
    pub fn n_synthetic(&self) -> usize {
        self.provenance.len()
    }

    fn unchanged(x: &Matrix, y: &[u8], minority_class: u8, seed: u64) -> Self {
        Self {
            x: x.clone(),
            y: y.to_vec(),
            synthetic: vec![false; y.len()],
            provenance: Vec::new(),
            minority_class,
            duplicated_fallback: false,
            seed,
        }
    }

    /// CSV dump of the synthetic rows with their provenance columns.
    pub fn write_synthetic_csv(
        &self,
        path: &std::path::Path,
        feature_names: &[String],
    ) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = feature_names.to_vec();
        header.extend(["label", "parent", "neighbor", "gap"].map(String::from));
        w.write_record(&header)?;
        let first = self.y.len() - self.provenance.len();
        for (k, p) in self.provenance.iter().enumerate() {
            let mut rec: Vec<String> = self
                .x
                .row(first + k)
                .iter()
                .map(|v| v.to_string())
                .collect();
            rec.push(self.minority_class.to_string());
            rec.push(p.parent.to_string());
            rec.push(p.neighbor.to_string());
            rec.push(p.gap.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Indices (into `members`) of the `k` nearest other members of `members[i]`; distance
/// ties resolve to the lower index.
fn nearest_members(x: &Matrix, members: &[usize], i: usize, k: usize) -> Vec<usize> {
    let me = x.row(members[i]);
    let mut cand: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &row)| (sq_dist(me, x.row(row)), j))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(k);
    cand.into_iter().map(|(_, j)| j).collect()
}

pub fn smote(x: &Matrix, y: &[u8], cfg: &SmoteConfig, seed: u64) -> Result<ResampledTrainingSet> {
    if x.rows() != y.len() {
        return Err(Error::invalid(format!(
            "{} rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if !(cfg.target_ratio > 0.0) {
        return Err(Error::invalid("SMOTE target ratio must be positive"));
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    let zeros = y.len() - ones;
    if ones == 0 || zeros == 0 {
        return Err(Error::degenerate("SMOTE needs both classes"));
    }
    let minority_class: u8 = if ones < zeros { 1 } else { 0 };
    let (n_min, n_maj) = if ones < zeros {
        (ones, zeros)
    } else {
        (zeros, ones)
    };
    let wanted = (cfg.target_ratio * n_maj as f64).round() as usize;
    if wanted <= n_min {
        return Ok(ResampledTrainingSet::unchanged(x, y, minority_class, seed));
    }
    let n_new = wanted - n_min;
    let members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority_class).collect();

    let mut out = x.clone();
    let mut labels = y.to_vec();
    let mut synthetic = vec![false; y.len()];
    let mut provenance = Vec::with_capacity(n_new);
    let mut r = rng::stream(seed, "smote", 0);

    let duplicated_fallback = n_min == 1;
    if duplicated_fallback {
        log::warn!("SMOTE: minority class has a single row; duplicating it {n_new} times");
        for _ in 0..n_new {
            out.push_row(x.row(members[0]))?;
            labels.push(minority_class);
            synthetic.push(true);
            provenance.push(Provenance {
                parent: members[0],
                neighbor: members[0],
                gap: 0.0,
            });
        }
    } else {
        let k = cfg.k_neighbors.clamp(1, n_min - 1);
        let neighbors: Vec<Vec<usize>> = {
            use rayon::prelude::*;
            (0..n_min)
                .into_par_iter()
                .map(|i| nearest_members(x, &members, i, k))
                .collect()
        };
        let mut row = vec![0.0; x.cols()];
        for _ in 0..n_new {
            let i = r.random_range(0..n_min);
            let j = neighbors[i][r.random_range(0..neighbors[i].len())];
            let gap: f64 = r.random();
            let (pa, nb) = (x.row(members[i]), x.row(members[j]));
            for ((o, a), b) in row.iter_mut().zip(pa).zip(nb) {
                *o = a + gap * (b - a);
            }
            out.push_row(&row)?;
            labels.push(minority_class);
            synthetic.push(true);
            provenance.push(Provenance {
                parent: members[i],
                neighbor: members[j],
                gap,
            });
        }
    }
    Ok(ResampledTrainingSet {
        x: out,
        y: labels,
        synthetic,
        provenance,
        minority_class,
        duplicated_fallback,
        seed,
    })
}
