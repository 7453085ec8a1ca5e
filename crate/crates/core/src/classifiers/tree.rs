//! CART trees grown level by level over presorted feature columns.
//!
//! The same grower serves the Gini trees of DT/RF and the second-order trees of GBT; the
//! difference lives in [`Criterion`]. Rows go left when `x[feature] <= threshold`, and
//! thresholds sit at midpoints between consecutive distinct values.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Criterion improvement of this split, weighted by the node's share of the
        /// training weight for Gini trees, raw objective gain for GBT trees.
        gain: f64,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    /// Largest feature index referenced plus one (0 for a leaf-only tree).
    pub fn feature_bound(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(feature + 1),
                Node::Leaf { .. } => None,
            })
            .max()
            .unwrap_or(0)
    }
}

/// `1 − p₀² − p₁²` for a pair of class counts.
pub fn gini_impurity(n0: f64, n1: f64) -> Result<f64> {
    if !(n0 >= 0.0 && n1 >= 0.0) || n0 + n1 == 0.0 {
        return Err(Error::invalid("gini impurity needs a positive total count"));
    }
    let t = n0 + n1;
    let (p0, p1) = (n0 / t, n1 / t);
    Ok(1.0 - p0 * p0 - p1 * p1)
}

fn gini(n0: f64, n1: f64) -> f64 {
    let t = n0 + n1;
    if t <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (n0 / t, n1 / t);
    1.0 - p0 * p0 - p1 * p1
}

/// Per-node sufficient statistics; `count` is the sample weight used for leaf-size limits.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Stats {
    pub a: f64,
    pub b: f64,
    pub count: f64,
}

impl Stats {
    fn add(&mut self, o: &Stats, w: f64) {
        self.a += o.a * w;
        self.b += o.b * w;
        self.count += w;
    }
    fn minus(&self, o: &Stats) -> Stats {
        Stats {
            a: self.a - o.a,
            b: self.b - o.b,
            count: self.count - o.count,
        }
    }
}

pub(crate) trait Criterion: Sync {
    /// Statistics contributed by one unit-weight row.
    fn row_stats(&self, row: usize) -> Stats;
    fn leaf_value(&self, s: &Stats) -> f64;
    fn gain(&self, parent: &Stats, left: &Stats, right: &Stats) -> f64;
    fn can_split(&self, s: &Stats) -> bool;
    fn child_ok(&self, _s: &Stats) -> bool {
        true
    }
    /// Whether a zero-gain split may still be taken at an impure node.
    fn allow_zero_gain(&self) -> bool {
        false
    }
    /// Gain stored on the node (for importance) given the local gain.
    fn recorded_gain(&self, local: f64, _node: &Stats, _root: &Stats) -> f64 {
        local
    }
}

/// Gini criterion over weighted class counts: `a` = weight of class 0, `b` = class 1.
pub(crate) struct Gini<'a> {
    pub y: &'a [u8],
    pub zero_gain_splits: bool,
}

impl Criterion for Gini<'_> {
    fn row_stats(&self, row: usize) -> Stats {
        let pos = self.y[row] as f64;
        Stats {
            a: 1.0 - pos,
            b: pos,
            count: 1.0,
        }
    }
    fn leaf_value(&self, s: &Stats) -> f64 {
        s.b / (s.a + s.b)
    }
    fn gain(&self, p: &Stats, l: &Stats, r: &Stats) -> f64 {
        let (wl, wr) = (l.a + l.b, r.a + r.b);
        gini(p.a, p.b) - (wl * gini(l.a, l.b) + wr * gini(r.a, r.b)) / (wl + wr)
    }
    fn can_split(&self, s: &Stats) -> bool {
        s.a > 0.0 && s.b > 0.0
    }
    fn allow_zero_gain(&self) -> bool {
        self.zero_gain_splits
    }
    fn recorded_gain(&self, local: f64, node: &Stats, root: &Stats) -> f64 {
        local * node.count / root.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct GrowLimits {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per node without replacement; `None` uses all.
    pub max_features: Option<usize>,
}

/// Row indices of each feature column in ascending value order (ties by row index).
#[derive(Debug, Clone)]
pub(crate) struct Presorted {
    order: Vec<Vec<u32>>,
    values: Vec<Vec<f64>>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let order = (0..x.cols())
            .into_par_iter()
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
                let vals = idx.iter().map(|&r| x.get(r as usize, f)).collect();
                (idx, vals)
            })
            .collect::<Vec<(Vec<u32>, Vec<f64>)>>();
        let (order, values) = order.into_iter().unzip();
        Self { order, values }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Frontier {
    node: usize,
    depth: usize,
    stats: Stats,
    features: Option<Vec<bool>>,
}

pub(crate) struct Grown {
    pub tree: Tree,
    /// Leaf node reached by each training row (`usize::MAX` for zero-weight rows).
    pub leaf_of_row: Vec<usize>,
}

const INACTIVE: u32 = u32::MAX;

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Best split of every active slot along one feature.
#[allow(clippy::too_many_arguments)]
fn scan_feature<C: Criterion>(
    crit: &C,
    order: &[u32],
    values: &[f64],
    f: usize,
    slot_of_row: &[u32],
    weights: Option<&[f64]>,
    parents: &[Stats],
    uses: &[bool],
    limits: &GrowLimits,
) -> Vec<Option<Candidate>> {
    let m = parents.len();
    let mut left = vec![Stats::default(); m];
    let mut last = vec![f64::NAN; m];
    let mut best: Vec<Option<Candidate>> = vec![None; m];
    let min_leaf = limits.min_samples_leaf.max(1) as f64;
    for (&r, &v) in order.iter().zip(values) {
        let r = r as usize;
        let s = slot_of_row[r];
        if s == INACTIVE || !uses[s as usize] {
            continue;
        }
        let s = s as usize;
        if left[s].count > 0.0 && v > last[s] {
            let l = left[s];
            let rt = parents[s].minus(&l);
            if l.count >= min_leaf
                && rt.count >= min_leaf
                && crit.child_ok(&l)
                && crit.child_ok(&rt)
            {
                let g = crit.gain(&parents[s], &l, &rt);
                if best[s].is_none_or(|b| g > b.gain) {
                    best[s] = Some(Candidate {
                        gain: g,
                        feature: f,
                        threshold: midpoint(last[s], v),
                    });
                }
            }
        }
        let w = weights.map_or(1.0, |w| w[r]);
        left[s].add(&crit.row_stats(r), w);
        last[s] = v;
    }
    best
}

/// Grows one tree. `weights` are per-row multiplicities (bootstrap); rows of weight 0 are
/// ignored. `rng` is only consulted when `max_features` subsamples.
pub(crate) fn grow<C: Criterion>(
    crit: &C,
    x: &Matrix,
    presorted: &Presorted,
    weights: Option<&[f64]>,
    limits: &GrowLimits,
    rng: Option<&mut StreamRng>,
) -> Grown {
    let n = x.rows();
    let p = x.cols();
    let mut rng = rng;
    let mut node_of_row: Vec<usize> = (0..n)
        .map(|r| {
            if weights.is_some_and(|w| w[r] == 0.0) {
                usize::MAX
            } else {
                0
            }
        })
        .collect();
    let mut root = Stats::default();
    for r in 0..n {
        if node_of_row[r] == 0 {
            root.add(&crit.row_stats(r), weights.map_or(1.0, |w| w[r]));
        }
    }
    let mut nodes: Vec<Node> = vec![Node::Leaf {
        value: 0.0,
        cover: root.count,
    }];
    let mut frontier = vec![Frontier {
        node: 0,
        depth: 0,
        stats: root,
        features: None,
    }];

    while !frontier.is_empty() {
        // decide which frontier nodes try to split
        let mut slot_of_node = vec![INACTIVE; nodes.len()];
        let mut splittable: Vec<usize> = Vec::new();
        for (fi, fr) in frontier.iter_mut().enumerate() {
            let ok = fr.stats.count >= limits.min_samples_split.max(2) as f64
                && limits.max_depth.is_none_or(|d| fr.depth < d)
                && crit.can_split(&fr.stats);
            if ok {
                if let (Some(k), Some(r)) = (limits.max_features, rng.as_deref_mut()) {
                    if k < p {
                        let mut mask = vec![false; p];
                        for f in sample(r, p, k) {
                            mask[f] = true;
                        }
                        fr.features = Some(mask);
                    }
                }
                slot_of_node[fr.node] = splittable.len() as u32;
                splittable.push(fi);
            }
        }
        let mut best: Vec<Option<Candidate>> = vec![None; splittable.len()];
        if !splittable.is_empty() {
            let slot_of_row: Vec<u32> = node_of_row
                .iter()
                .map(|&nd| {
                    if nd == usize::MAX {
                        INACTIVE
                    } else {
                        slot_of_node[nd]
                    }
                })
                .collect();
            let parents: Vec<Stats> = splittable.iter().map(|&fi| frontier[fi].stats).collect();
            let per_feature: Vec<Vec<Option<Candidate>>> = (0..p)
                .into_par_iter()
                .map(|f| {
                    let uses: Vec<bool> = splittable
                        .iter()
                        .map(|&fi| frontier[fi].features.as_ref().is_none_or(|m| m[f]))
                        .collect();
                    if !uses.iter().any(|&u| u) {
                        return vec![None; splittable.len()];
                    }
                    scan_feature(
                        crit,
                        &presorted.order[f],
                        &presorted.values[f],
                        f,
                        &slot_of_row,
                        weights,
                        &parents,
                        &uses,
                        limits,
                    )
                })
                .collect();
            for cands in per_feature {
                for (s, c) in cands.into_iter().enumerate() {
                    if let Some(c) = c {
                        if best[s].is_none_or(|b| c.gain > b.gain) {
                            best[s] = Some(c);
                        }
                    }
                }
            }
        }

        // materialize splits and leaves
        let mut next = Vec::new();
        let mut split_of_node: Vec<Option<(usize, f64, usize)>> = vec![None; nodes.len()];
        let mut pending_children: Vec<(usize, usize)> = Vec::new(); // (child node, depth)
        let mut slot_iter = 0;
        for (fi, fr) in frontier.iter().enumerate() {
            let cand = if splittable.get(slot_iter) == Some(&fi) {
                slot_iter += 1;
                best[slot_iter - 1]
            } else {
                None
            };
            let accept = cand.filter(|c| {
                c.gain > 0.0
                    || (crit.allow_zero_gain() && c.gain > -1e-12 && crit.can_split(&fr.stats))
            });
            match accept {
                Some(c) => {
                    let l = nodes.len();
                    nodes.push(Node::Leaf {
                        value: 0.0,
                        cover: 0.0,
                    });
                    nodes.push(Node::Leaf {
                        value: 0.0,
                        cover: 0.0,
                    });
                    nodes[fr.node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: l,
                        right: l + 1,
                        gain: crit.recorded_gain(c.gain.max(0.0), &fr.stats, &root),
                        cover: fr.stats.count,
                    };
                    split_of_node[fr.node] = Some((c.feature, c.threshold, l));
                    pending_children.push((l, fr.depth + 1));
                    pending_children.push((l + 1, fr.depth + 1));
                }
                None => {
                    nodes[fr.node] = Node::Leaf {
                        value: crit.leaf_value(&fr.stats),
                        cover: fr.stats.count,
                    };
                }
            }
        }
        if pending_children.is_empty() {
            break;
        }
        let mut child_stats = vec![Stats::default(); nodes.len()];
        for r in 0..n {
            let nd = node_of_row[r];
            if nd == usize::MAX {
                continue;
            }
            if let Some((f, t, l)) = split_of_node.get(nd).copied().flatten() {
                let c = if x.get(r, f) <= t { l } else { l + 1 };
                node_of_row[r] = c;
                child_stats[c].add(&crit.row_stats(r), weights.map_or(1.0, |w| w[r]));
            }
        }
        for (c, depth) in pending_children {
            next.push(Frontier {
                node: c,
                depth,
                stats: child_stats[c],
                features: None,
            });
        }
        frontier = next;
    }
    Grown {
        tree: Tree { nodes },
        leaf_of_row: node_of_row,
    }
}

/// A single split search at a node holding all rows of `x`; returns only splits with a
/// positive Gini decrease.
pub fn best_split(
    x: &Matrix,
    y: &[u8],
    features: &[usize],
    min_samples_split: usize,
    min_samples_leaf: usize,
) -> Option<(usize, f64, f64)> {
    if x.rows() < min_samples_split.max(2) {
        return None;
    }
    let crit = Gini {
        y,
        zero_gain_splits: false,
    };
    let mut parent = Stats::default();
    for r in 0..x.rows() {
        parent.add(&crit.row_stats(r), 1.0);
    }
    let limits = GrowLimits {
        max_depth: Some(1),
        min_samples_split,
        min_samples_leaf,
        max_features: None,
    };
    let slots = vec![0u32; x.rows()];
    let mut best: Option<Candidate> = None;
    let pre = Presorted::new(x);
    for &f in features {
        if let Some(c) = scan_feature(
            &crit,
            &pre.order[f],
            &pre.values[f],
            f,
            &slots,
            None,
            &[parent],
            &[true],
            &limits,
        )[0]
        {
            if best.is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
    }
    best.filter(|c| c.gain > 0.0)
        .map(|c| (c.feature, c.threshold, c.gain))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtParams {
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for DtParams {
    fn default() -> Self {
        Self {
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_depth: None,
        }
    }
}

/// CART classification tree; leaves hold the fraction of positive training rows.
pub fn fit_tree(x: &Matrix, y: &[u8], params: &DtParams) -> Tree {
    let pre = Presorted::new(x);
    fit_tree_presorted(x, y, &pre, None, &params_limits(params), None)
}

fn params_limits(params: &DtParams) -> GrowLimits {
    GrowLimits {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        max_features: None,
    }
}

pub(crate) fn fit_tree_presorted(
    x: &Matrix,
    y: &[u8],
    pre: &Presorted,
    weights: Option<&[f64]>,
    limits: &GrowLimits,
    rng: Option<&mut StreamRng>,
) -> Tree {
    let crit = Gini {
        y,
        zero_gain_splits: true,
    };
    grow(&crit, x, pre, weights, limits, rng).tree
}
