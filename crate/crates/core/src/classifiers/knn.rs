use serde::{Deserialize, Serialize};

use crate::matrix::{sq_dist, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub n_neighbors: usize,
    /// Accepted for compatibility with tree-based neighbor search; search here is brute force.
    pub leaf_size: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            n_neighbors: 5,
            leaf_size: 30,
        }
    }
}

/// Offset applied to an exact 0.5 vote so the nearest neighbor's label decides the side.
pub const TIE_NUDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Matrix,
    pub y: Vec<u8>,
}

impl KnnModel {
    /// Stored rows ordered by distance to `q`, ties by row index, truncated to k.
    pub fn neighbors(&self, q: &[f64]) -> Vec<usize> {
        let k = self.k.min(self.x.rows());
        // bounded insertion keeps this O(n·k) rather than a full sort
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, row) in self.x.iter_rows().enumerate() {
            let d = sq_dist(q, row);
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, i));
            best.truncate(k);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    pub fn score(&self, q: &[f64]) -> f64 {
        let nb = self.neighbors(q);
        let pos = nb.iter().filter(|&&i| self.y[i] == 1).count();
        let frac = pos as f64 / nb.len() as f64;
        if 2 * pos == nb.len() {
            if self.y[nb[0]] == 1 {
                frac + TIE_NUDGE
            } else {
                frac - TIE_NUDGE
            }
        } else {
            frac
        }
    }
}

pub(crate) fn fit_knn(x: &Matrix, y: &[u8], params: &KnnParams) -> KnnModel {
    if params.leaf_size != KnnParams::default().leaf_size {
        log::info!(
            "KNN leaf_size={} ignored: neighbor search is brute force",
            params.leaf_size
        );
    }
    KnnModel {
        k: params.n_neighbors,
        x: x.clone(),
        y: y.to_vec(),
    }
}
