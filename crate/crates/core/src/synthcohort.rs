//! Synthetic learner cohorts with planted patterns.
//!
//! Each pattern draws its features independently: counts from a gamma-Poisson mixture,
//! binaries as Bernoulli, age from a rounded normal, categoricals from fixed shares. The
//! outcome is Bernoulli with a per-pattern logistic model over binary features and
//! `ln(1 + count)` terms.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::classifiers::sigmoid;
use crate::dataset::{
    encode, Encoder, FeatureKind, FeatureSchema, LabeledDataset, RawColumn, RawTable,
};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum FeatureDist {
    Bernoulli {
        p: f64,
    },
    /// Gamma-Poisson count with the given mean; `dispersion` is the coefficient of variation
    /// of the gamma rate. Zero dispersion is a point mass at the mean.
    Count {
        mean: f64,
        dispersion: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
        #[serde(default)]
        round: bool,
    },
    Categorical {
        levels: Vec<String>,
        probs: Vec<f64>,
    },
}

impl FeatureDist {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("feature `{name}`: {m}")));
        match self {
            FeatureDist::Bernoulli { p } if !(0.0..=1.0).contains(p) => bad("p outside [0, 1]"),
            FeatureDist::Count { mean, dispersion } if !(*mean >= 0.0 && *dispersion >= 0.0) => {
                bad("count mean and dispersion must be non-negative")
            }
            FeatureDist::Normal { sd, mean, .. } if !(*sd >= 0.0 && mean.is_finite()) => {
                bad("invalid normal")
            }
            FeatureDist::Categorical { levels, probs } => {
                if levels.is_empty() || levels.len() != probs.len() {
                    return bad("levels and probs must be non-empty and equally long");
                }
                if probs.iter().any(|p| !(*p >= 0.0))
                    || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return bad("probs must be non-negative and sum to 1");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub intercept: f64,
    /// (feature, weight); counts enter as `ln(1 + x)`, binaries as-is.
    pub weights: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub name: String,
    pub weight: f64,
    /// One entry per schema feature, in schema order.
    pub features: Vec<FeatureDist>,
    pub outcome: OutcomeModel,
    /// Marginal outcome rate the intercept was calibrated to, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub schema: FeatureSchema,
    pub patterns: Vec<PatternSpec>,
    pub n: usize,
    pub seed: u64,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.patterns.is_empty() {
            return Err(Error::invalid("cohort spec has no patterns"));
        }
        let total: f64 = self.patterns.iter().map(|p| p.weight).sum();
        if self.patterns.iter().any(|p| !(p.weight >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "pattern weights must be non-negative and sum to 1",
            ));
        }
        for p in &self.patterns {
            if p.features.len() != self.schema.features.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.schema.features.len(),
                    got: p.features.len(),
                });
            }
            for (f, d) in self.schema.features.iter().zip(&p.features) {
                d.validate(&f.name)?;
                let ok = matches!(
                    (f.kind, d),
                    (FeatureKind::Binary, FeatureDist::Bernoulli { .. })
                        | (FeatureKind::Count, FeatureDist::Count { .. })
                        | (FeatureKind::Continuous, FeatureDist::Normal { .. })
                        | (FeatureKind::Continuous, FeatureDist::Count { .. })
                        | (FeatureKind::Categorical, FeatureDist::Categorical { .. })
                );
                if !ok {
                    return Err(Error::invalid(format!(
                        "distribution of `{}` does not fit its kind",
                        f.name
                    )));
                }
            }
            for (name, _) in &p.outcome.weights {
                let j = self.schema.index_of(name).ok_or_else(|| {
                    Error::invalid(format!("outcome weight on unknown feature `{name}`"))
                })?;
                if self.schema.features[j].kind == FeatureKind::Categorical {
                    return Err(Error::invalid(format!(
                        "outcome weight on categorical `{name}`"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Num(f64),
    Text(String),
}

fn draw(d: &FeatureDist, r: &mut StreamRng) -> Cell {
    match d {
        FeatureDist::Bernoulli { p } => Cell::Num((r.random::<f64>() < *p) as u8 as f64),
        FeatureDist::Count { mean, dispersion } => {
            if *dispersion == 0.0 || *mean == 0.0 {
                return Cell::Num(*mean);
            }
            let shape = 1.0 / (dispersion * dispersion);
            let lambda = Gamma::new(shape, mean / shape).unwrap().sample(r);
            if lambda <= 0.0 {
                Cell::Num(0.0)
            } else {
                Cell::Num(Poisson::new(lambda).unwrap().sample(r))
            }
        }
        FeatureDist::Normal { mean, sd, round } => {
            let v = if *sd == 0.0 {
                *mean
            } else {
                Normal::new(*mean, *sd).unwrap().sample(r)
            };
            Cell::Num(if *round { v.round() } else { v })
        }
        FeatureDist::Categorical { levels, probs } => {
            let u: f64 = r.random();
            let mut acc = 0.0;
            for (l, p) in levels.iter().zip(probs) {
                acc += p;
                if u < acc {
                    return Cell::Text(l.clone());
                }
            }
            Cell::Text(levels.last().unwrap().clone())
        }
    }
}

fn linear_predictor(schema: &FeatureSchema, m: &OutcomeModel, row: &[Cell]) -> f64 {
    let mut z = m.intercept;
    for (name, w) in &m.weights {
        let j = schema.index_of(name).unwrap();
        if let Cell::Num(v) = row[j] {
            z += w * match schema.features[j].kind {
                FeatureKind::Count => v.ln_1p(),
                _ => v,
            };
        }
    }
    z
}

fn draw_pattern_row(spec: &CohortSpec, p: &PatternSpec, r: &mut StreamRng) -> (Vec<Cell>, u8) {
    let row: Vec<Cell> = p.features.iter().map(|d| draw(d, r)).collect();
    let y = (r.random::<f64>() < sigmoid(linear_predictor(&spec.schema, &p.outcome, &row))) as u8;
    (row, y)
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub table: RawTable,
    pub dataset: LabeledDataset,
    pub encoder: Encoder,
    pub true_pattern: Vec<usize>,
    /// Patterns that received no rows.
    pub empty_patterns: Vec<usize>,
}

const BLOCK: usize = 4096;

pub fn generate(spec: &CohortSpec, n: usize, seed: u64) -> Result<SyntheticCohort> {
    use rayon::prelude::*;
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("cohort size must be positive"));
    }
    let cum: Vec<f64> = spec
        .patterns
        .iter()
        .scan(0.0, |a, p| {
            *a += p.weight;
            Some(*a)
        })
        .collect();
    let blocks: Vec<Vec<(usize, Vec<Cell>, u8)>> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, "synth-block", b as u64);
            let len = BLOCK.min(n - b * BLOCK);
            (0..len)
                .map(|_| {
                    let u: f64 = r.random();
                    let k = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
                    let (row, y) = draw_pattern_row(spec, &spec.patterns[k], &mut r);
                    (k, row, y)
                })
                .collect()
        })
        .collect();

    let p = spec.schema.features.len();
    let mut cols: Vec<RawColumn> = spec
        .schema
        .features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Categorical => RawColumn::Text(Vec::with_capacity(n)),
            _ => RawColumn::Numeric(Vec::with_capacity(n)),
        })
        .collect();
    let mut outcome = Vec::with_capacity(n);
    let mut true_pattern = Vec::with_capacity(n);
    for (k, row, y) in blocks.into_iter().flatten() {
        for (j, cell) in row.into_iter().enumerate().take(p) {
            match (&mut cols[j], cell) {
                (RawColumn::Numeric(v), Cell::Num(x)) => v.push(Some(x)),
                (RawColumn::Text(v), Cell::Text(s)) => v.push(Some(s)),
                _ => unreachable!("validated kinds"),
            }
        }
        outcome.push(Some(y as f64));
        true_pattern.push(k);
    }
    let empty_patterns: Vec<usize> = (0..spec.patterns.len())
        .filter(|k| !true_pattern.contains(k))
        .collect();
    if !empty_patterns.is_empty() {
        log::warn!("synthetic cohort: patterns {empty_patterns:?} received no rows");
    }
    let table = RawTable::from_columns(spec.schema.clone(), cols, outcome)?;
    let (dataset, encoder) = encode(&table)?;
    Ok(SyntheticCohort {
        table,
        dataset,
        encoder,
        true_pattern,
        empty_patterns,
    })
}

impl SyntheticCohort {
    /// Writes the raw-schema CSV plus a `true_pattern` column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let schema = &self.table.schema;
        let mut header: Vec<String> = schema
            .features
            .iter()
            .map(|f| f.source_column().to_string())
            .collect();
        header.push(schema.outcome_source().to_string());
        header.push("true_pattern".into());
        w.write_record(&header)?;
        for i in 0..self.table.len() {
            let mut rec: Vec<String> = self
                .table
                .columns
                .iter()
                .map(|c| match c {
                    RawColumn::Numeric(v) => v[i].map_or(String::new(), |x| x.to_string()),
                    RawColumn::Text(v) => v[i].clone().unwrap_or_default(),
                })
                .collect();
            rec.push(self.table.outcome[i].map_or(String::new(), |x| x.to_string()));
            rec.push(self.true_pattern[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Sets each pattern's intercept so its expected outcome rate equals `target_rate`,
/// estimated on `draws` fixed-seed rows of that pattern.
pub fn calibrate_intercepts(spec: &mut CohortSpec, draws: usize, seed: u64) -> Result<()> {
    spec.validate()?;
    for k in 0..spec.patterns.len() {
        let Some(target) = spec.patterns[k].target_rate else {
            continue;
        };
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::invalid("target rate must lie in (0, 1)"));
        }
        let mut r = rng::stream(seed, "calibrate", k as u64);
        let p = &spec.patterns[k];
        let offsets: Vec<f64> = (0..draws)
            .map(|_| {
                let row: Vec<Cell> = p.features.iter().map(|d| draw(d, &mut r)).collect();
                let zero = OutcomeModel {
                    intercept: 0.0,
                    weights: p.outcome.weights.clone(),
                };
                linear_predictor(&spec.schema, &zero, &row)
            })
            .collect();
        let rate = |b: f64| offsets.iter().map(|o| sigmoid(b + o)).sum::<f64>() / draws as f64;
        let (mut lo, mut hi) = (-60.0, 60.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if rate(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        spec.patterns[k].outcome.intercept = 0.5 * (lo + hi);
    }
    Ok(())
}

/// Country shares: one dominant level and a geometric tail.
fn country_levels() -> (Vec<String>, Vec<f64>) {
    const LEVELS: usize = 65;
    const TOP: f64 = 0.2787;
    const SMALLEST: f64 = 0.00082;
    let tail = LEVELS - 1;
    // find ratio q with SMALLEST·Σ_{k<tail} q^{-k} = 1 − TOP
    let total = |q: f64| {
        (0..tail)
            .map(|k| SMALLEST * q.powi(-(k as i32)))
            .sum::<f64>()
    };
    let (mut lo, mut hi) = (0.5, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 - TOP {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    let mut probs = vec![TOP];
    let mut t: Vec<f64> = (0..tail)
        .map(|k| SMALLEST * q.powi(-((tail - 1 - k) as i32)))
        .collect();
    let s: f64 = t.iter().sum();
    for v in t.iter_mut() {
        *v *= (1.0 - TOP) / s;
    }
    probs.extend(t);
    let levels = (0..LEVELS).map(|i| format!("C{i:02}")).collect();
    (levels, probs)
}

pub const REFERENCE_N: usize = 92_722;
const CALIBRATION_DRAWS: usize = 200_000;
const CALIBRATION_SEED: u64 = 0x7ab1e2;

/// Two patterns: a 99.02% low-engagement
/// pattern certifying at 1.68% and a 0.98% highly engaged pattern certifying at 53.24%.
pub fn reference_spec() -> CohortSpec {
    let (levels, probs) = country_levels();
    let country = FeatureDist::Categorical { levels, probs };
    let count = |mean: f64, dispersion: f64| FeatureDist::Count { mean, dispersion };
    let gender = |pm: f64| FeatureDist::Categorical {
        levels: vec!["f".into(), "m".into()],
        probs: vec![1.0 - pm, pm],
    };
    let age = |mean: f64| FeatureDist::Normal {
        mean,
        sd: 7.97,
        round: true,
    };
    let low = PatternSpec {
        name: "low_autonomy".into(),
        weight: 0.9902,
        features: vec![
            age(34.25),
            gender(0.6483),
            country.clone(),
            FeatureDist::Bernoulli { p: 0.4661 },
            FeatureDist::Bernoulli { p: 0.0549 },
            count(3.28, 1.08),
            count(94.61, 0.74),
            count(23.06, 1.30),
            count(2.89, 1.11),
            count(0.01, 10.0),
        ],
        outcome: OutcomeModel {
            intercept: 0.0,
            weights: vec![
                ("explored".into(), 1.5),
                ("ndays_act".into(), 1.2),
                ("nchapters".into(), 1.6),
                ("nevents".into(), 0.4),
                ("nforum_posts".into(), 0.5),
            ],
        },
        target_rate: Some(0.0168),
    };
    let motivated = PatternSpec {
        name: "motivated".into(),
        weight: 0.0098,
        features: vec![
            age(35.88),
            gender(0.5093),
            country,
            FeatureDist::Bernoulli { p: 1.0 },
            FeatureDist::Bernoulli { p: 0.9286 },
            count(41.72, 0.5),
            count(5855.63, 0.5),
            count(1022.94, 0.6),
            count(14.25, 0.5),
            count(0.10, 10.0),
        ],
        outcome: OutcomeModel {
            intercept: 0.0,
            weights: vec![
                ("ndays_act".into(), 1.0),
                ("nplay_video".into(), -0.6),
                ("nchapters".into(), 0.8),
                ("nforum_posts".into(), 1.0),
            ],
        },
        target_rate: Some(0.5324),
    };
    let mut spec = CohortSpec {
        schema: FeatureSchema::edx(),
        patterns: vec![low, motivated],
        n: REFERENCE_N,
        seed: 0,
    };
    calibrate_intercepts(&mut spec, CALIBRATION_DRAWS, CALIBRATION_SEED)
        .expect("built-in spec is valid");
    spec
}
