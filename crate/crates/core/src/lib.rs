//! Cluster-then-predict learning analytics.
//!
//! Learners are first grouped into behavior patterns with K-means (the number of patterns
//! chosen by a vote of cluster validity indices), then a classifier is trained per
//! pattern. The same classifiers trained on the pooled data form the baseline the
//! per-pattern arm is compared against.

pub mod classifiers;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod matrix;
pub mod pipeline;
pub mod real;
pub mod resampling;
pub mod rng;
pub mod synthcohort;

pub use error::{Error, Result};
pub use matrix::Matrix;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
