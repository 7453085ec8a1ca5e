//! The two experimental arms: per-pattern prediction after behavior clustering
//! ("integration") and a single predictor over all rows ("direct"), plus the accounting
//! that compares them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{self, AlgorithmId, HyperparameterSet, PresetColumn, TrainedModel};
use crate::clustering::{
    kmeans_fit, select_k, KSelectionReport, PatternAssignment, SelectConfig, ValidityIndex,
};
use crate::dataset::{
    apply_normalizer, fit_normalizer, ingest, random_split, stratified_split, FeatureSchema,
    LabeledDataset, NormalizationParams, Scaling, SplitIndices,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    bootstrap_rate_distributions, chi_square_2x2, cramers_v, evaluate, ChiSquare,
    ContingencyTable2x2, EvaluationReport, RateDistributions, RocCurve,
};
use crate::explain::{self, ImportanceRanking, ShapMatrix};
use crate::matrix::Matrix;
use crate::resampling::{smote, SmoteConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// Numeric CSV written by `LabeledDataset::write_csv`.
    #[default]
    Clean,
    /// Raw person-course style CSV; cleaned and encoded on load.
    PersonCourse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub path: PathBuf,
    #[serde(default)]
    pub format: DataFormat,
    /// Schema for `person_course` input; the ten-feature edX schema when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
}

impl DataSource {
    pub fn load(&self) -> Result<LabeledDataset> {
        match self.format {
            DataFormat::Clean => LabeledDataset::read_csv(&self.path),
            DataFormat::PersonCourse => {
                let schema = match &self.schema {
                    Some(p) => FeatureSchema::from_json_file(p)?,
                    None => FeatureSchema::edx(),
                };
                let (ds, side) = ingest(&self.path, &schema)?;
                log::info!(
                    "cleaning kept {} rows, dropped {}",
                    side.clean_report.kept,
                    side.clean_report.dropped
                );
                Ok(ds)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScope {
    /// Stratified split inside every pattern.
    #[default]
    PerPattern,
    /// One stratified split over all rows, then partitioned by pattern.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Skips index voting and fits this K directly.
    pub k_fixed: Option<usize>,
    pub indices: Vec<ValidityIndex>,
    pub restarts: usize,
    /// Restarts of the final fit at the chosen K. Restart streams are shared with the
    /// selection fit, so a larger value can only lower the inertia.
    pub final_restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub pairwise_sample: usize,
    /// Feature names to cluster on; empty means every feature.
    pub features: Vec<String>,
    pub scaling: Scaling,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let s = SelectConfig::default();
        Self {
            k_min: s.k_min,
            k_max: s.k_max,
            k_fixed: None,
            indices: s.indices,
            restarts: s.restarts,
            final_restarts: 50,
            max_iter: s.max_iter,
            tol: s.tol,
            pairwise_sample: s.pairwise_sample,
            features: Vec::new(),
            scaling: Scaling::ZScore,
        }
    }
}

impl ClusterConfig {
    pub fn select_config(&self) -> SelectConfig {
        SelectConfig {
            k_min: self.k_min,
            k_max: self.k_max,
            indices: self.indices.clone(),
            restarts: self.restarts,
            max_iter: self.max_iter,
            tol: self.tol,
            pairwise_sample: self.pairwise_sample,
        }
    }
}

/// Hyperparameters per arm. Pattern `p` uses entry `min(p, len − 1)` of `patterns`;
/// algorithms missing from a list fall back to the reference preset of that arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmHyperparameters {
    pub direct: Vec<HyperparameterSet>,
    pub patterns: Vec<Vec<HyperparameterSet>>,
}

impl Default for ArmHyperparameters {
    fn default() -> Self {
        let col = |c| {
            AlgorithmId::ALL
                .iter()
                .map(|&a| HyperparameterSet::preset(a, c))
                .collect()
        };
        Self {
            direct: col(PresetColumn::Direct),
            patterns: vec![col(PresetColumn::LowAutonomy), col(PresetColumn::Motivated)],
        }
    }
}

impl ArmHyperparameters {
    /// The same settings for the direct arm and every pattern.
    pub fn uniform(sets: Vec<HyperparameterSet>) -> Self {
        Self {
            direct: sets.clone(),
            patterns: vec![sets],
        }
    }

    pub fn for_direct(&self, a: AlgorithmId) -> HyperparameterSet {
        find(&self.direct, a).unwrap_or_else(|| HyperparameterSet::preset(a, PresetColumn::Direct))
    }

    pub fn for_pattern(&self, p: usize, a: AlgorithmId) -> HyperparameterSet {
        let listed = if self.patterns.is_empty() {
            None
        } else {
            find(&self.patterns[p.min(self.patterns.len() - 1)], a)
        };
        listed.unwrap_or_else(|| {
            let col = if p == 0 {
                PresetColumn::LowAutonomy
            } else {
                PresetColumn::Motivated
            };
            HyperparameterSet::preset(a, col)
        })
    }
}

fn find(sets: &[HyperparameterSet], a: AlgorithmId) -> Option<HyperparameterSet> {
    sets.iter().find(|h| h.algorithm() == a).copied()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemographicsConfig {
    pub age_feature: String,
    /// Rows with age below the cutoff form the younger group.
    pub age_cutoff: f64,
    pub gender_feature: String,
    /// Names of the encoded gender values 0 and 1.
    pub gender_levels: [String; 2],
}

impl Default for DemographicsConfig {
    fn default() -> Self {
        Self {
            age_feature: "age".into(),
            age_cutoff: 35.0,
            gender_feature: "gender".into(),
            gender_levels: ["f".into(), "m".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: Option<DataSource>,
    pub seed: u64,
    pub split_ratio: f64,
    pub split_scope: SplitScope,
    pub clustering: ClusterConfig,
    pub algorithms: Vec<AlgorithmId>,
    pub hyperparameters: ArmHyperparameters,
    /// `None` disables oversampling.
    pub smote: Option<SmoteConfig>,
    /// Classifier-side feature scaling, fitted on each partition's training rows.
    pub scaling: Scaling,
    pub bootstrap_b: usize,
    pub threshold: f64,
    pub yates: bool,
    pub demographics: DemographicsConfig,
    pub save_models: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            seed: 0,
            split_ratio: 0.7,
            split_scope: SplitScope::PerPattern,
            clustering: ClusterConfig::default(),
            algorithms: AlgorithmId::ALL.to_vec(),
            hyperparameters: ArmHyperparameters::default(),
            smote: Some(SmoteConfig::default()),
            scaling: Scaling::MinMax,
            bootstrap_b: 1000,
            threshold: 0.5,
            yates: false,
            demographics: DemographicsConfig::default(),
            save_models: false,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::invalid("split_ratio must lie in (0, 1)"));
        }
        let c = &self.clustering;
        match c.k_fixed {
            Some(0) => return Err(Error::invalid("k_fixed must be at least 1")),
            Some(_) => {}
            None => {
                if c.k_min < 2 || c.k_max < c.k_min {
                    return Err(Error::invalid(format!(
                        "K range {}..={} invalid: need 2 <= k_min <= k_max",
                        c.k_min, c.k_max
                    )));
                }
                if c.indices.is_empty() {
                    return Err(Error::invalid("at least one validity index is required"));
                }
            }
        }
        if c.restarts == 0 {
            return Err(Error::invalid("restarts must be positive"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::invalid("no algorithms configured"));
        }
        let uniq: BTreeSet<_> = self.algorithms.iter().collect();
        if uniq.len() != self.algorithms.len() {
            return Err(Error::invalid("algorithm listed twice"));
        }
        for set in
            std::iter::once(&self.hyperparameters.direct).chain(&self.hyperparameters.patterns)
        {
            let mut seen = BTreeSet::new();
            for h in set {
                h.validate()?;
                if !seen.insert(h.algorithm()) {
                    return Err(Error::invalid(format!(
                        "hyperparameters for {} given twice in one arm",
                        h.algorithm()
                    )));
                }
            }
        }
        if let Some(s) = &self.smote {
            if s.k_neighbors == 0 || !(s.target_ratio > 0.0 && s.target_ratio.is_finite()) {
                return Err(Error::invalid(
                    "smote needs k_neighbors >= 1 and target_ratio > 0",
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid("threshold must lie in [0, 1]"));
        }
        Ok(())
    }

    fn partition_seed(&self, partition: usize) -> u64 {
        derive_seed(self.seed, "partition", partition as u64)
    }
}

/// Stage 1 output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternDiscovery {
    /// Labels ordered by pattern size, pattern 0 the largest.
    pub assignment: PatternAssignment,
    pub kselect: Option<KSelectionReport>,
    pub normalizer: NormalizationParams,
    pub features: Vec<String>,
    pub centroids: Matrix,
}

pub fn discover_patterns(cfg: &RunConfig, ds: &LabeledDataset) -> Result<PatternDiscovery> {
    let c = &cfg.clustering;
    let cols: Vec<usize> = if c.features.is_empty() {
        (0..ds.feature_names.len()).collect()
    } else {
        c.features
            .iter()
            .map(|f| {
                ds.feature_index(f)
                    .ok_or_else(|| Error::MissingColumn(f.clone()))
            })
            .collect::<Result<_>>()?
    };
    let raw = ds.x.select_cols(&cols);
    let normalizer = fit_normalizer(&raw, c.scaling)?;
    let x = apply_normalizer(&normalizer, &raw)?;
    let sel = c.select_config();
    let (k, kselect) = match c.k_fixed {
        Some(k) => (k, None),
        None => {
            let s = select_k(&x, &sel, cfg.seed)?;
            (s.report.winner, Some(s.report))
        }
    };
    let mut kc = sel.kmeans_config(k, cfg.seed);
    kc.restarts = kc.restarts.max(c.final_restarts);
    let fit = kmeans_fit(&x, &kc)?;
    let fit = fit.sorted_by_size();
    Ok(PatternDiscovery {
        assignment: fit.assignment,
        kselect,
        normalizer,
        features: cols.iter().map(|&j| ds.feature_names[j].clone()).collect(),
        centroids: fit.model.centroids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteSummary {
    pub n_before: usize,
    pub n_synthetic: usize,
    pub minority_class: u8,
    pub duplicated_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmResult {
    pub algorithm: AlgorithmId,
    pub hyperparameters: HyperparameterSet,
    #[serde(skip)]
    pub model: Option<TrainedModel>,
    /// Scores and labels in the order of the partition's test rows.
    pub scores: Vec<f64>,
    pub predictions: Vec<u8>,
    pub report: EvaluationReport,
    pub roc: Option<RocCurve>,
    pub rates: Option<RateDistributions>,
    pub flags: Vec<String>,
}

/// One split + preprocess + fit + evaluate unit: the whole dataset for the direct arm, one
/// pattern for the integration arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRun {
    pub partition: usize,
    /// Global row indices of the partition.
    pub rows: Vec<usize>,
    /// Global row indices.
    pub split: SplitIndices,
    /// Exactly the rows the normalizer, SMOTE and every model saw.
    pub fitted_on: Vec<usize>,
    pub normalizer: NormalizationParams,
    pub smote: Option<SmoteSummary>,
    pub results: Vec<AlgorithmResult>,
    pub flags: Vec<String>,
}

impl PartitionRun {
    pub fn result(&self, a: AlgorithmId) -> Option<&AlgorithmResult> {
        self.results.iter().find(|r| r.algorithm == a)
    }

    /// True when any evaluation or fit in this partition hit a degenerate case.
    pub fn is_degenerate(&self) -> bool {
        !self.flags.is_empty() || self.results.iter().any(|r| !r.flags.is_empty())
    }

    pub fn y_test(&self, ds: &LabeledDataset) -> Vec<u8> {
        self.split.test.iter().map(|&i| ds.y[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationRun {
    pub discovery: PatternDiscovery,
    pub patterns: Vec<PartitionRun>,
    pub pooled: BTreeMap<AlgorithmId, EvaluationReport>,
    #[serde(skip)]
    pub pooled_roc: BTreeMap<AlgorithmId, RocCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectRun {
    pub run: PartitionRun,
}

fn global_split(cfg: &RunConfig, y: &[u8]) -> Result<SplitIndices> {
    split_for(
        y,
        cfg.split_ratio,
        derive_seed(cfg.partition_seed(0), "split", 0),
    )
}

fn split_for(y: &[u8], ratio: f64, seed: u64) -> Result<SplitIndices> {
    if y.iter().all(|&v| v == y[0]) {
        random_split(y.len(), ratio, seed)
    } else {
        stratified_split(y, ratio, seed)
    }
}

/// Runs one partition. `rows` are global indices; `split` (global indices) overrides the
/// partition's own stratified split.
fn run_partition(
    cfg: &RunConfig,
    ds: &LabeledDataset,
    partition: usize,
    rows: &[usize],
    split: Option<SplitIndices>,
    hp: &(dyn Fn(AlgorithmId) -> HyperparameterSet + Sync),
) -> Result<PartitionRun> {
    if rows.is_empty() {
        return Err(Error::degenerate(format!(
            "partition {partition} has no rows"
        )));
    }
    let pseed = cfg.partition_seed(partition);
    let mut flags = Vec::new();
    let split = match split {
        Some(s) => s,
        None => {
            let y: Vec<u8> = rows.iter().map(|&i| ds.y[i]).collect();
            if y.iter().all(|&v| v == y[0]) {
                flags.push("single_class_partition".to_string());
            }
            let local =
                split_for(&y, cfg.split_ratio, derive_seed(pseed, "split", 0)).map_err(|e| {
                    Error::degenerate(format!("partition {partition} ({} rows): {e}", rows.len()))
                })?;
            SplitIndices {
                train: local.train.iter().map(|&i| rows[i]).collect(),
                test: local.test.iter().map(|&i| rows[i]).collect(),
                seed: local.seed,
            }
        }
    };
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::degenerate(format!(
            "partition {partition}: empty train or test side"
        )));
    }
    let train_raw = ds.x.select_rows(&split.train);
    let normalizer = fit_normalizer(&train_raw, cfg.scaling)?;
    let x_train = apply_normalizer(&normalizer, &train_raw)?;
    let x_test = apply_normalizer(&normalizer, &ds.x.select_rows(&split.test))?;
    let y_train: Vec<u8> = split.train.iter().map(|&i| ds.y[i]).collect();
    let y_test: Vec<u8> = split.test.iter().map(|&i| ds.y[i]).collect();
    let single_class_train = y_train.iter().all(|&v| v == y_train[0]);
    if single_class_train {
        flags.push("single_class_train".to_string());
    }

    let (fx, fy, smote_summary) = match &cfg.smote {
        Some(sc) if !single_class_train => {
            let r = smote(&x_train, &y_train, sc, derive_seed(pseed, "smote", 0))?;
            let summary = SmoteSummary {
                n_before: y_train.len(),
                n_synthetic: r.n_synthetic(),
                minority_class: r.minority_class,
                duplicated_fallback: r.duplicated_fallback,
            };
            (r.x, r.y, Some(summary))
        }
        _ => (x_train, y_train.clone(), None),
    };
    if smote_summary.is_some_and(|s| s.duplicated_fallback) {
        flags.push("smote_duplicated_fallback".to_string());
    }

    let results = cfg
        .algorithms
        .par_iter()
        .map(|&a| {
            let slot = AlgorithmId::ALL.iter().position(|&b| b == a).unwrap_or(0) as u64;
            let h = hp(a);
            let mut rflags = Vec::new();
            let (model, scores) =
                match classifiers::fit(&h, &fx, &fy, derive_seed(pseed, "model", slot)) {
                    Ok(m) => {
                        let s = m.predict_scores(&x_test)?;
                        (Some(m), s)
                    }
                    Err(Error::Degenerate(msg)) => {
                        // constant scorer at the training positive rate
                        log::warn!("partition {partition}, {a}: {msg}; using a constant scorer");
                        rflags.push("constant_fallback".to_string());
                        let rate = fy.iter().filter(|&&v| v == 1).count() as f64 / fy.len() as f64;
                        (None, vec![rate; y_test.len()])
                    }
                    Err(e) => return Err(e),
                };
            let (report, roc) = evaluate(&y_test, &scores, cfg.threshold)?;
            let predictions = classifiers::predict_labels(&scores, cfg.threshold);
            let rates = if cfg.bootstrap_b > 0 {
                match bootstrap_rate_distributions(
                    &y_test,
                    &predictions,
                    cfg.bootstrap_b,
                    derive_seed(pseed, "bootstrap", slot),
                ) {
                    Ok(r) => Some(r),
                    Err(Error::Degenerate(_)) => {
                        rflags.push("bootstrap_undefined".to_string());
                        None
                    }
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            if report.flags.iter().any(|f| f == "single_class_test") {
                rflags.push("single_class_test".to_string());
            }
            Ok(AlgorithmResult {
                algorithm: a,
                hyperparameters: h,
                model,
                scores,
                predictions,
                report,
                roc,
                rates,
                flags: rflags,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PartitionRun {
        partition,
        rows: rows.to_vec(),
        fitted_on: split.train.clone(),
        split,
        normalizer,
        smote: smote_summary,
        results,
        flags,
    })
}

pub fn run_direct(cfg: &RunConfig, ds: &LabeledDataset) -> Result<DirectRun> {
    cfg.validate()?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let run = run_partition(cfg, ds, 0, &rows, None, &|a| {
        cfg.hyperparameters.for_direct(a)
    })?;
    Ok(DirectRun { run })
}

pub fn run_integration(cfg: &RunConfig, ds: &LabeledDataset) -> Result<IntegrationRun> {
    cfg.validate()?;
    let discovery = discover_patterns(cfg, ds)?;
    run_integration_with(cfg, ds, discovery)
}

/// Stage 2 over an existing pattern assignment.
pub fn run_integration_with(
    cfg: &RunConfig,
    ds: &LabeledDataset,
    discovery: PatternDiscovery,
) -> Result<IntegrationRun> {
    if discovery.assignment.len() != ds.len() {
        return Err(Error::invalid(format!(
            "assignment covers {} rows, dataset has {}",
            discovery.assignment.len(),
            ds.len()
        )));
    }
    let members = discovery.assignment.members();
    let global = match cfg.split_scope {
        SplitScope::PerPattern => None,
        SplitScope::Global => Some(global_split(cfg, &ds.y)?),
    };
    let patterns = members
        .par_iter()
        .enumerate()
        .map(|(p, rows)| {
            let split = global.as_ref().map(|g| {
                let labels = &discovery.assignment.labels;
                SplitIndices {
                    train: g
                        .train
                        .iter()
                        .copied()
                        .filter(|&i| labels[i] == p)
                        .collect(),
                    test: g.test.iter().copied().filter(|&i| labels[i] == p).collect(),
                    seed: g.seed,
                }
            });
            run_partition(cfg, ds, p, rows, split, &|a| {
                cfg.hyperparameters.for_pattern(p, a)
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pooled = BTreeMap::new();
    let mut pooled_roc = BTreeMap::new();
    for &a in &cfg.algorithms {
        let parts: Vec<PatternPredictions> = patterns
            .iter()
            .map(|p| {
                let r = p.result(a).expect("every partition runs every algorithm");
                PatternPredictions {
                    rows: p.split.test.clone(),
                    y_true: p.y_test(ds),
                    scores: r.scores.clone(),
                }
            })
            .collect();
        let (report, roc) = pool_overall(&parts, cfg.threshold)?;
        pooled.insert(a, report);
        if let Some(roc) = roc {
            pooled_roc.insert(a, roc);
        }
    }
    Ok(IntegrationRun {
        discovery,
        patterns,
        pooled,
        pooled_roc,
    })
}

/// Test-set predictions of one pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternPredictions {
    pub rows: Vec<usize>,
    pub y_true: Vec<u8>,
    pub scores: Vec<f64>,
}

/// Metrics over the union of per-pattern test predictions.
pub fn pool_overall(
    parts: &[PatternPredictions],
    threshold: f64,
) -> Result<(EvaluationReport, Option<RocCurve>)> {
    let mut seen = BTreeSet::new();
    let mut y = Vec::new();
    let mut s = Vec::new();
    for p in parts {
        if p.rows.len() != p.y_true.len() || p.rows.len() != p.scores.len() {
            return Err(Error::invalid(
                "pattern predictions: rows, labels and scores differ in length",
            ));
        }
        for &r in &p.rows {
            if !seen.insert(r) {
                return Err(Error::invalid(format!(
                    "test row {r} appears in more than one pattern"
                )));
            }
        }
        y.extend_from_slice(&p.y_true);
        s.extend_from_slice(&p.scores);
    }
    if y.is_empty() {
        return Err(Error::Empty("pooled predictions"));
    }
    evaluate(&y, &s, threshold)
}

/// Direct-arm test predictions regrouped by pattern label. `None` marks a pattern with no
/// direct test rows.
pub fn separate_by_pattern(
    direct: &DirectRun,
    ds: &LabeledDataset,
    labels: &[usize],
    threshold: f64,
) -> Result<BTreeMap<AlgorithmId, Vec<Option<EvaluationReport>>>> {
    let run = &direct.run;
    if labels.len() != ds.len() {
        return Err(Error::invalid(format!(
            "pattern labels cover {} rows, dataset has {}",
            labels.len(),
            ds.len()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = BTreeMap::new();
    for r in &run.results {
        let mut groups = Vec::with_capacity(k);
        for p in 0..k {
            let pos: Vec<usize> = (0..run.split.test.len())
                .filter(|&t| labels[run.split.test[t]] == p)
                .collect();
            if pos.is_empty() {
                groups.push(None);
                continue;
            }
            let y: Vec<u8> = pos.iter().map(|&t| ds.y[run.split.test[t]]).collect();
            let s: Vec<f64> = pos.iter().map(|&t| r.scores[t]).collect();
            groups.push(Some(evaluate(&y, &s, threshold)?.0));
        }
        out.insert(r.algorithm, groups);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
    WeightedPrecision,
    WeightedRecall,
    WeightedF1,
    Auc,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Accuracy,
        Metric::Precision,
        Metric::Recall,
        Metric::F1,
        Metric::WeightedPrecision,
        Metric::WeightedRecall,
        Metric::WeightedF1,
        Metric::Auc,
    ];

    /// Metrics entering the per-pattern improvement summaries.
    pub const SUMMARY: [Metric; 5] = [
        Metric::Accuracy,
        Metric::Precision,
        Metric::Recall,
        Metric::F1,
        Metric::Auc,
    ];

    pub fn of(self, r: &EvaluationReport) -> Option<f64> {
        let m = &r.metrics;
        let w = &r.weighted;
        let v = match self {
            Metric::Accuracy => m.accuracy,
            Metric::Precision if !m.precision_undefined => m.precision,
            Metric::Recall if !m.recall_undefined => m.recall,
            Metric::F1 if !m.f1_undefined => m.f1,
            Metric::WeightedPrecision => w.precision,
            Metric::WeightedRecall => w.recall,
            Metric::WeightedF1 => w.f1,
            Metric::Auc => return r.auc,
            _ => return None,
        };
        v.is_finite().then_some(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    pub integration: Option<f64>,
    pub direct: Option<f64>,
    /// `(integration − direct) / direct` in percent; `None` when undefined.
    pub improvement_pct: Option<f64>,
}

pub fn relative_improvement(integration: f64, direct: f64) -> Option<f64> {
    (direct != 0.0 && direct.is_finite() && integration.is_finite())
        .then(|| (integration - direct) / direct * 100.0)
}

fn compare_reports(
    i: Option<&EvaluationReport>,
    d: Option<&EvaluationReport>,
) -> Vec<MetricComparison> {
    Metric::ALL
        .iter()
        .map(|&metric| {
            let iv = i.and_then(|r| metric.of(r));
            let dv = d.and_then(|r| metric.of(r));
            MetricComparison {
                metric,
                integration: iv,
                direct: dv,
                improvement_pct: iv.zip(dv).and_then(|(a, b)| relative_improvement(a, b)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmComparison {
    pub algorithm: AlgorithmId,
    /// Pooled integration vs the direct arm.
    pub overall: Vec<MetricComparison>,
    /// Per pattern: that pattern's integration report vs the direct arm restricted to it.
    pub patterns: Vec<Vec<MetricComparison>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementSummary {
    pub n: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl ImprovementSummary {
    fn of(v: &[f64]) -> Self {
        if v.is_empty() {
            return Self {
                n: 0,
                mean: None,
                min: None,
                max: None,
            };
        }
        Self {
            n: v.len(),
            mean: Some(v.iter().sum::<f64>() / v.len() as f64),
            min: v.iter().copied().reduce(f64::min),
            max: v.iter().copied().reduce(f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub algorithms: Vec<AlgorithmComparison>,
    /// Over algorithms and the summary metrics, one entry per pattern.
    pub pattern_summaries: Vec<ImprovementSummary>,
    /// Per algorithm, over patterns and the summary metrics.
    pub algorithm_summaries: BTreeMap<AlgorithmId, ImprovementSummary>,
}

pub fn compare(
    integration: &IntegrationRun,
    direct: &DirectRun,
    ds: &LabeledDataset,
    threshold: f64,
) -> Result<ComparisonReport> {
    if let Some(p) = integration.patterns.first() {
        if p.results
            .iter()
            .map(|r| r.report.threshold)
            .any(|t| t != direct.run.results[0].report.threshold)
        {
            return Err(Error::invalid(
                "arms were evaluated at different thresholds",
            ));
        }
    }
    let separated = separate_by_pattern(
        direct,
        ds,
        &integration.discovery.assignment.labels,
        threshold,
    )?;
    let k = integration.patterns.len();
    let mut algorithms = Vec::new();
    let mut per_pattern: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut algorithm_summaries = BTreeMap::new();
    for d in &direct.run.results {
        let a = d.algorithm;
        let Some(pooled) = integration.pooled.get(&a) else {
            continue;
        };
        let overall = compare_reports(Some(pooled), Some(&d.report));
        let mut patterns = Vec::with_capacity(k);
        let mut this_alg = Vec::new();
        for (p, part) in integration.patterns.iter().enumerate() {
            let ir = part.result(a).map(|r| &r.report);
            let dr = separated
                .get(&a)
                .and_then(|g| g.get(p))
                .and_then(Option::as_ref);
            let rows = compare_reports(ir, dr);
            for c in rows.iter().filter(|c| Metric::SUMMARY.contains(&c.metric)) {
                if let Some(v) = c.improvement_pct {
                    per_pattern[p].push(v);
                    this_alg.push(v);
                }
            }
            patterns.push(rows);
        }
        algorithm_summaries.insert(a, ImprovementSummary::of(&this_alg));
        algorithms.push(AlgorithmComparison {
            algorithm: a,
            overall,
            patterns,
        });
    }
    Ok(ComparisonReport {
        algorithms,
        pattern_summaries: per_pattern
            .iter()
            .map(|v| ImprovementSummary::of(v))
            .collect(),
        algorithm_summaries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicRow {
    pub pattern: usize,
    pub variable: String,
    pub level: String,
    pub count: u64,
    /// Share of the pattern, in percent.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationTest {
    pub variable: String,
    /// Rows of the table: pattern 0 vs every other pattern.
    pub table: ContingencyTable2x2,
    pub chi_square: Option<ChiSquare>,
    pub cramers_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub rows: Vec<DemographicRow>,
    pub tests: Vec<AssociationTest>,
}

/// Age-group and gender composition of each pattern, with chi-square tests of
/// independence (pattern 0 against the rest).
pub fn demographics(
    ds: &LabeledDataset,
    labels: &[usize],
    cfg: &DemographicsConfig,
    yates: bool,
) -> Result<Demographics> {
    let age = ds
        .feature_index(&cfg.age_feature)
        .ok_or_else(|| Error::MissingColumn(cfg.age_feature.clone()))?;
    let gender = ds
        .feature_index(&cfg.gender_feature)
        .ok_or_else(|| Error::MissingColumn(cfg.gender_feature.clone()))?;
    if labels.len() != ds.len() {
        return Err(Error::invalid("pattern labels do not cover the dataset"));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let age_names = [
        format!("<{}", cfg.age_cutoff),
        format!(">={}", cfg.age_cutoff),
    ];
    let groups: [(&str, Vec<u8>, [String; 2]); 2] = [
        (
            "age_group",
            (0..ds.len())
                .map(|i| (ds.x.get(i, age) >= cfg.age_cutoff) as u8)
                .collect(),
            age_names,
        ),
        (
            "gender",
            (0..ds.len())
                .map(|i| (ds.x.get(i, gender) >= 0.5) as u8)
                .collect(),
            cfg.gender_levels.clone(),
        ),
    ];
    let mut rows = Vec::new();
    let mut tests = Vec::new();
    for (var, codes, names) in &groups {
        let mut counts = vec![[0u64; 2]; k];
        for (&p, &c) in labels.iter().zip(codes) {
            counts[p][c as usize] += 1;
        }
        for (p, c) in counts.iter().enumerate() {
            let tot = (c[0] + c[1]) as f64;
            for lvl in 0..2 {
                rows.push(DemographicRow {
                    pattern: p,
                    variable: var.to_string(),
                    level: names[lvl].clone(),
                    count: c[lvl],
                    percent: if tot > 0.0 {
                        100.0 * c[lvl] as f64 / tot
                    } else {
                        f64::NAN
                    },
                });
            }
        }
        let rest = counts
            .iter()
            .skip(1)
            .fold([0u64; 2], |a, c| [a[0] + c[0], a[1] + c[1]]);
        let mut table = ContingencyTable2x2::new([counts.first().copied().unwrap_or([0, 0]), rest]);
        table.row_labels = ["pattern 0".into(), "other patterns".into()];
        table.col_labels = names.clone();
        let chi = chi_square_2x2(&table, yates).ok();
        let v = chi
            .as_ref()
            .and_then(|c| cramers_v(c.statistic, table.total(), 2, 2).ok());
        tests.push(AssociationTest {
            variable: var.to_string(),
            table,
            chi_square: chi,
            cramers_v: v,
        });
    }
    Ok(Demographics { rows, tests })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageEntry {
    pub arm: String,
    pub partition: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub overlap: usize,
}

/// Checks that no partition fitted anything on a row it was evaluated on.
pub fn leakage_audit(
    integration: Option<&IntegrationRun>,
    direct: Option<&DirectRun>,
) -> Result<Vec<LeakageEntry>> {
    let mut parts: Vec<(&str, &PartitionRun)> = Vec::new();
    if let Some(i) = integration {
        parts.extend(i.patterns.iter().map(|p| ("integration", p)));
    }
    if let Some(d) = direct {
        parts.push(("direct", &d.run));
    }
    let mut out = Vec::new();
    for (arm, p) in parts {
        let fitted: BTreeSet<usize> = p.fitted_on.iter().copied().collect();
        let overlap = p.split.test.iter().filter(|i| fitted.contains(i)).count();
        out.push(LeakageEntry {
            arm: arm.into(),
            partition: p.partition,
            n_train: fitted.len(),
            n_test: p.split.test.len(),
            overlap,
        });
        if overlap > 0 {
            return Err(Error::invalid(format!(
                "{arm} partition {}: {overlap} test rows were used for fitting",
                p.partition
            )));
        }
    }
    Ok(out)
}

/// Everything `run` produces, in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub integration: Option<IntegrationRun>,
    pub direct: Option<DirectRun>,
    /// Direct-arm reports per pattern (present when both a direct run and a pattern
    /// assignment exist).
    pub separated: Option<BTreeMap<AlgorithmId, Vec<Option<EvaluationReport>>>>,
    pub comparison: Option<ComparisonReport>,
    pub demographics: Option<Demographics>,
    pub leakage: Vec<LeakageEntry>,
}

impl RunOutput {
    pub fn is_degenerate(&self) -> bool {
        self.integration
            .iter()
            .flat_map(|i| &i.patterns)
            .any(PartitionRun::is_degenerate)
            || self.direct.as_ref().is_some_and(|d| d.run.is_degenerate())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arms {
    Integration,
    Direct,
    Both,
}

pub fn run(cfg: &RunConfig, ds: &LabeledDataset, arms: Arms) -> Result<RunOutput> {
    cfg.validate()?;
    let integration = match arms {
        Arms::Direct => None,
        _ => Some(run_integration(cfg, ds)?),
    };
    let direct = match arms {
        Arms::Integration => None,
        _ => Some(run_direct(cfg, ds)?),
    };
    let labels = integration.as_ref().map(|i| &i.discovery.assignment.labels);
    let separated = match (&direct, labels) {
        (Some(d), Some(l)) => Some(separate_by_pattern(d, ds, l, cfg.threshold)?),
        _ => None,
    };
    let comparison = match (&integration, &direct) {
        (Some(i), Some(d)) => Some(compare(i, d, ds, cfg.threshold)?),
        _ => None,
    };
    let demographics = match labels {
        Some(l)
            if ds.feature_index(&cfg.demographics.age_feature).is_some()
                && ds.feature_index(&cfg.demographics.gender_feature).is_some() =>
        {
            Some(demographics(ds, l, &cfg.demographics, cfg.yates)?)
        }
        _ => None,
    };
    let leakage = leakage_audit(integration.as_ref(), direct.as_ref())?;
    Ok(RunOutput {
        integration,
        direct,
        separated,
        comparison,
        demographics,
        leakage,
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v)?;
    std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_patterns_csv(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["row", "pattern"])?;
    for (i, p) in labels.iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()])?;
    }
    finish(w, path)
}

pub fn read_patterns_csv(path: &Path) -> Result<Vec<usize>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(1).unwrap_or("");
        out.push(cell.parse().map_err(|_| Error::ParseCell {
            row: i + 1,
            column: "pattern".into(),
            value: cell.into(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSplit {
    pub arm: String,
    pub partition: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Writes every run artifact into `dir` and returns the written paths in order.
pub fn write_artifacts(
    dir: &Path,
    cfg: &RunConfig,
    ds: &LabeledDataset,
    out: &RunOutput,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };

    write_json(&emit("run_config.json"), cfg)?;

    if let Some(i) = &out.integration {
        write_patterns_csv(&emit("patterns.csv"), &i.discovery.assignment.labels)?;
        let ks = serde_json::json!({
            "k": i.discovery.assignment.k(),
            "sizes": i.discovery.assignment.sizes,
            "features": i.discovery.features,
            "selection": i.discovery.kselect,
        });
        write_json(&emit("kselect.json"), &ks)?;
    }

    let report_map = |p: &PartitionRun| -> BTreeMap<String, serde_json::Value> {
        p.results
            .iter()
            .map(|r| {
                (
                    r.algorithm.to_string(),
                    serde_json::json!({"report": r.report, "flags": r.flags, "hyperparameters": r.hyperparameters}),
                )
            })
            .collect()
    };
    let mut metrics = serde_json::Map::new();
    if let Some(i) = &out.integration {
        let patterns: Vec<_> = i
            .patterns
            .iter()
            .map(|p| {
                serde_json::json!({
                    "pattern": p.partition,
                    "n_rows": p.rows.len(),
                    "n_train": p.split.train.len(),
                    "n_test": p.split.test.len(),
                    "smote": p.smote,
                    "flags": p.flags,
                    "algorithms": report_map(p),
                })
            })
            .collect();
        let pooled: BTreeMap<String, &EvaluationReport> =
            i.pooled.iter().map(|(a, r)| (a.to_string(), r)).collect();
        metrics.insert(
            "integration".into(),
            serde_json::json!({"patterns": patterns, "pooled": pooled}),
        );
    }
    if let Some(d) = &out.direct {
        let by_pattern = out.separated.as_ref().map(|s| {
            s.iter()
                .map(|(a, v)| (a.to_string(), v))
                .collect::<BTreeMap<_, _>>()
        });
        metrics.insert(
            "direct".into(),
            serde_json::json!({
                "n_train": d.run.split.train.len(),
                "n_test": d.run.split.test.len(),
                "smote": d.run.smote,
                "flags": d.run.flags,
                "overall": report_map(&d.run),
                "by_pattern": by_pattern,
            }),
        );
    }
    metrics.insert("leakage_audit".into(), serde_json::to_value(&out.leakage)?);
    write_json(&emit("metrics.json"), &metrics)?;

    if let Some(c) = &out.comparison {
        write_json(&emit("comparison.json"), c)?;
    }

    // per-partition split indices, consumed by `explain`
    let mut splits = Vec::new();
    if let Some(i) = &out.integration {
        splits.extend(i.patterns.iter().map(|p| PartitionSplit {
            arm: "integration".into(),
            partition: p.partition,
            train: p.split.train.clone(),
            test: p.split.test.clone(),
        }));
    }
    if let Some(d) = &out.direct {
        splits.push(PartitionSplit {
            arm: "direct".into(),
            partition: 0,
            train: d.run.split.train.clone(),
            test: d.run.split.test.clone(),
        });
    }
    write_json(&emit("splits.json"), &splits)?;

    let mut parts: Vec<(&str, String, &PartitionRun)> = Vec::new();
    if let Some(i) = &out.integration {
        parts.extend(
            i.patterns
                .iter()
                .map(|p| ("integration", p.partition.to_string(), p)),
        );
    }
    if let Some(d) = &out.direct {
        parts.push(("direct", "all".into(), &d.run));
    }

    let path = emit("roc_points.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["arm", "pattern", "algorithm", "fpr", "tpr", "threshold"])?;
    let mut roc_rows = |arm: &str, pattern: &str, a: AlgorithmId, roc: &RocCurve| -> Result<()> {
        for pt in &roc.points {
            w.write_record([
                arm.to_string(),
                pattern.to_string(),
                a.to_string(),
                pt.fpr.to_string(),
                pt.tpr.to_string(),
                pt.threshold.to_string(),
            ])?;
        }
        Ok(())
    };
    for (arm, pat, p) in &parts {
        for r in &p.results {
            if let Some(roc) = &r.roc {
                roc_rows(arm, pat, r.algorithm, roc)?;
            }
        }
    }
    if let Some(i) = &out.integration {
        for (a, roc) in &i.pooled_roc {
            roc_rows("integration", "pooled", *a, roc)?;
        }
    }
    finish(w, &path)?;

    let path = emit("violin_samples.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["arm", "pattern", "algorithm", "replicate", "fpr", "tpr"])?;
    for (arm, pat, p) in &parts {
        for r in &p.results {
            if let Some(d) = &r.rates {
                for (b, (f, t)) in d.fpr.iter().zip(&d.tpr).enumerate() {
                    w.write_record([
                        arm.to_string(),
                        pat.clone(),
                        r.algorithm.to_string(),
                        b.to_string(),
                        f.to_string(),
                        t.to_string(),
                    ])?;
                }
            }
        }
    }
    finish(w, &path)?;

    if let Some(d) = &out.demographics {
        let path = emit("demographics.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["pattern", "variable", "level", "count", "percent"])?;
        for r in &d.rows {
            w.write_record([
                r.pattern.to_string(),
                r.variable.clone(),
                r.level.clone(),
                r.count.to_string(),
                r.percent.to_string(),
            ])?;
        }
        finish(w, &path)?;
        write_json(&emit("demographic_tests.json"), &d.tests)?;
    }

    if cfg.save_models {
        let mdir = dir.join("models");
        std::fs::create_dir_all(&mdir).map_err(|e| Error::io(&mdir, e))?;
        for (arm, pat, p) in &parts {
            for r in &p.results {
                if let Some(m) = &r.model {
                    let path = emit(&format!("models/{arm}-{pat}-{}.json", r.algorithm));
                    std::fs::write(&path, m.to_json()?).map_err(|e| Error::io(&path, e))?;
                }
            }
        }
    }
    let _ = ds;
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    /// Features the explained model is trained on; empty means every feature.
    pub features: Vec<String>,
    /// At most this many test rows are explained.
    pub max_rows: usize,
    pub background: usize,
    pub guard: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            features: vec![
                "viewed".into(),
                "explored".into(),
                "ndays_act".into(),
                "nevents".into(),
                "nplay_video".into(),
                "nchapters".into(),
                "nforum_posts".into(),
            ],
            max_rows: 1000,
            background: explain::DEFAULT_BACKGROUND,
            guard: explain::DEFAULT_GUARD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PatternExplanation {
    pub importance: ImportanceRanking,
    pub shap: ShapMatrix,
    pub model: TrainedModel,
}

/// Fits the pattern's GBT on the chosen features of its training rows (same scaling and
/// oversampling as stage 2), then ranks features by split gain and explains test rows.
pub fn explain_pattern(
    cfg: &RunConfig,
    ecfg: &ExplainConfig,
    ds: &LabeledDataset,
    pattern: usize,
    train: &[usize],
    test: &[usize],
) -> Result<PatternExplanation> {
    let cols: Vec<usize> = if ecfg.features.is_empty() {
        (0..ds.feature_names.len()).collect()
    } else {
        ecfg.features
            .iter()
            .map(|f| {
                ds.feature_index(f)
                    .ok_or_else(|| Error::MissingColumn(f.clone()))
            })
            .collect::<Result<_>>()?
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("pattern train or test rows"));
    }
    let names: Vec<String> = cols.iter().map(|&j| ds.feature_names[j].clone()).collect();
    let sub = ds.select_features(&cols);
    let train_raw = sub.x.select_rows(train);
    let norm = fit_normalizer(&train_raw, cfg.scaling)?;
    let x_train = apply_normalizer(&norm, &train_raw)?;
    let x_test = apply_normalizer(&norm, &sub.x.select_rows(test))?;
    let y_train: Vec<u8> = train.iter().map(|&i| ds.y[i]).collect();
    let seed = derive_seed(cfg.seed, "explain", pattern as u64);
    let (fx, fy) = match &cfg.smote {
        Some(sc) if y_train.iter().any(|&v| v != y_train[0]) => {
            let r = smote(&x_train, &y_train, sc, derive_seed(seed, "smote", 0))?;
            (r.x, r.y)
        }
        _ => (x_train.clone(), y_train),
    };
    let hp = cfg.hyperparameters.for_pattern(pattern, AlgorithmId::GBT);
    let model = classifiers::fit(&hp, &fx, &fy, derive_seed(seed, "model", 0))?;
    let importance = explain::model_importance(&model, &names)?;
    let bg_rows = explain::sample_background(
        x_train.rows(),
        ecfg.background,
        derive_seed(seed, "background", 0),
    );
    let background = x_train.select_rows(&bg_rows);
    let rows =
        explain::sample_background(x_test.rows(), ecfg.max_rows, derive_seed(seed, "rows", 0));
    let mut shap = explain::explain_rows(&model, &x_test, &rows, &background, &names, ecfg.guard)?;
    shap.sample_ids = rows.iter().map(|&r| test[r]).collect();
    Ok(PatternExplanation {
        importance,
        shap,
        model,
    })
}
