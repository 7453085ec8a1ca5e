//! Pattern discovery: K-means over the background and behavior features, validity indices,
//! and majority-vote selection of K.

pub mod indices;
pub mod kmeans;
pub mod select;

pub use indices::{validity_index, PairwiseDistances, SelectionRule, ValidityIndex, WithinCurve};
pub use kmeans::{
    assign_patterns, kmeans_fit, KMeansConfig, KMeansFit, KMeansModel, PatternAssignment,
};
pub use select::{kmeans_seed, select_k, tally_votes, KSelection, KSelectionReport, SelectConfig};

/// Adjusted Rand index between two labelings of the same rows; 1 for identical
/// partitions up to relabeling, about 0 for independent ones.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> crate::Result<f64> {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return Err(crate::Error::invalid("labelings differ in length"));
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    let mut ra: HashMap<usize, u64> = HashMap::new();
    let mut rb: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&c| pairs(c)).sum();
    let sa: f64 = ra.values().map(|&c| pairs(c)).sum();
    let sb: f64 = rb.values().map(|&c| pairs(c)).sum();
    let total = pairs(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::adjusted_rand_index;

    #[test]
    fn ari_examples() {
        assert_eq!(
            adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(),
            1.0
        );
        // sklearn reference value for this pair
        let v = adjusted_rand_index(&[0, 0, 1, 2], &[0, 0, 1, 1]).unwrap();
        assert!((v - 0.5714285714285714).abs() < 1e-12);
    }
}
