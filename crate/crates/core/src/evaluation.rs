//! Confusion-matrix metrics, ROC/AUC, bootstrap rate distributions and the 2×2
//! association statistics.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;
    fn add(self, o: Self) -> Self {
        ConfusionMatrix {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionMatrix::default(), |a, b| a + b)
    }
}

fn check_binary(v: &[u8], what: &str) -> Result<()> {
    match v.iter().find(|&&x| x > 1) {
        Some(x) => Err(Error::invalid(format!(
            "{what} contains non-binary value {x}"
        ))),
        None => Ok(()),
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Empty("label vectors"));
    }
    check_binary(y_true, "y_true")?;
    check_binary(y_pred, "y_pred")?;
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            _ => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a denominator was zero and the value was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn f1_of(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

/// Positive-class metrics. Panics only on an empty matrix.
pub fn metric_set(cm: &ConfusionMatrix) -> MetricSet {
    let n = cm.total();
    assert!(n > 0, "metric_set on an empty confusion matrix");
    let accuracy = (cm.tp + cm.tn) as f64 / n as f64;
    let (precision, pu) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, ru) = ratio(cm.tp, cm.tp + cm.fn_);
    let (f1, fu) = if pu || ru {
        (0.0, true)
    } else {
        f1_of(precision, recall)
    };
    MetricSet {
        accuracy,
        precision,
        recall,
        f1,
        precision_undefined: pu,
        recall_undefined: ru,
        f1_undefined: fu,
    }
}

/// Per-class metrics averaged with class-support weights, each class taken as positive in
/// turn. The undefined flags are set if any class had an undefined value.
pub fn weighted_metric_set(cm: &ConfusionMatrix) -> MetricSet {
    let n = cm.total();
    assert!(n > 0, "weighted_metric_set on an empty confusion matrix");
    // (support, correct, predicted) for class 1 then class 0
    let classes = [
        (cm.tp + cm.fn_, cm.tp, cm.tp + cm.fp),
        (cm.tn + cm.fp, cm.tn, cm.tn + cm.fn_),
    ];
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0u64, 0.0);
    let (mut pu, mut ru, mut fu) = (false, false, false);
    for &(support, correct, predicted) in &classes {
        let (p, pund) = ratio(correct, predicted);
        let (r, rund) = ratio(correct, support);
        let (f, fund) = if pund || rund {
            (0.0, true)
        } else {
            f1_of(p, r)
        };
        // support · recall_c is exactly `correct`, kept in integers
        r_sum += correct;
        p_sum += support as f64 * p;
        f_sum += support as f64 * f;
        pu |= pund && support > 0;
        ru |= rund && support > 0;
        fu |= fund && support > 0;
    }
    let nf = n as f64;
    MetricSet {
        accuracy: (cm.tp + cm.tn) as f64 / nf,
        precision: p_sum / nf,
        recall: r_sum as f64 / nf,
        f1: f_sum / nf,
        precision_undefined: pu,
        recall_undefined: ru,
        f1_undefined: fu,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called positive; the first point uses +inf.
    pub threshold: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<RocCurve> {
    if y_true.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: scores.len(),
        });
    }
    check_binary(y_true, "y_true")?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let pos = y_true.iter().filter(|&&v| v == 1).count() as u64;
    let neg = y_true.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate("ROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: Real(f64::INFINITY),
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area times pos·neg, exact in integers
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: Real(s),
        });
    }
    let auc = area2 as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Summary {
        mean: s.iter().sum::<f64>() / s.len() as f64,
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDistributions {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr_summary: Summary,
    pub tpr_summary: Summary,
    pub seed: u64,
}

pub const BOOTSTRAP_MAX_REDRAWS: usize = 1000;

/// Test-set bootstrap of FPR and TPR; replicate `b` draws from its own derived stream, and
/// resamples missing a class are redrawn.
pub fn bootstrap_rate_distributions(
    y_true: &[u8],
    y_pred: &[u8],
    b: usize,
    seed: u64,
) -> Result<RateDistributions> {
    use rayon::prelude::*;
    if b == 0 {
        return Err(Error::invalid("bootstrap needs B >= 1"));
    }
    let cm = confusion(y_true, y_pred)?;
    if cm.positives() == 0 || cm.negatives() == 0 {
        return Err(Error::degenerate("bootstrap rates need both classes"));
    }
    let n = y_true.len();
    let reps: Vec<Result<(f64, f64)>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng::stream(seed, "bootstrap", rep as u64);
            for _ in 0..BOOTSTRAP_MAX_REDRAWS {
                let mut c = ConfusionMatrix::default();
                for _ in 0..n {
                    let i = r.random_range(0..n);
                    match (y_true[i], y_pred[i]) {
                        (1, 1) => c.tp += 1,
                        (0, 1) => c.fp += 1,
                        (1, 0) => c.fn_ += 1,
                        _ => c.tn += 1,
                    }
                }
                if c.positives() > 0 && c.negatives() > 0 {
                    return Ok((
                        c.fp as f64 / c.negatives() as f64,
                        c.tp as f64 / c.positives() as f64,
                    ));
                }
            }
            Err(Error::degenerate(format!(
                "bootstrap replicate {rep} lacked a class after {BOOTSTRAP_MAX_REDRAWS} draws"
            )))
        })
        .collect();
    let mut fpr = Vec::with_capacity(b);
    let mut tpr = Vec::with_capacity(b);
    for r in reps {
        let (f, t) = r?;
        fpr.push(f);
        tpr.push(t);
    }
    Ok(RateDistributions {
        fpr_summary: summarize(&fpr),
        tpr_summary: summarize(&tpr),
        fpr,
        tpr,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub cells: [[u64; 2]; 2],
    pub row_labels: [String; 2],
    pub col_labels: [String; 2],
}

impl ContingencyTable2x2 {
    pub fn new(cells: [[u64; 2]; 2]) -> Self {
        Self {
            cells,
            row_labels: ["row0".into(), "row1".into()],
            col_labels: ["col0".into(), "col1".into()],
        }
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    /// Cross-tabulates two binary vectors (`a` indexes rows, `b` columns).
    pub fn from_pairs(a: &[u8], b: &[u8]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        check_binary(a, "rows")?;
        check_binary(b, "columns")?;
        let mut cells = [[0u64; 2]; 2];
        for (&i, &j) in a.iter().zip(b) {
            cells[i as usize][j as usize] += 1;
        }
        Ok(Self::new(cells))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub yates: bool,
}

/// Pearson chi-square test of independence for a 2×2 table.
pub fn chi_square_2x2(t: &ContingencyTable2x2, yates: bool) -> Result<ChiSquare> {
    let [[a, b], [c, d]] = t.cells.map(|r| r.map(|v| v as f64));
    let n = a + b + c + d;
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if n == 0.0 || r1 == 0.0 || r2 == 0.0 || c1 == 0.0 || c2 == 0.0 {
        return Err(Error::degenerate(
            "chi-square needs every marginal positive",
        ));
    }
    let mut diff = (a * d - b * c).abs();
    if yates {
        diff = (diff - n / 2.0).max(0.0);
    }
    let statistic = n * diff * diff / (r1 * r2 * c1 * c2);
    let dist = ChiSquared::new(1.0).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        df: 1,
        p_value: dist.sf(statistic),
        yates,
    })
}

/// `sqrt(χ² / (n · (min(r, c) − 1)))`, clamped to [0, 1].
pub fn cramers_v(chi2: f64, n: u64, rows: usize, cols: usize) -> Result<f64> {
    let m = rows.min(cols);
    if n == 0 || m < 2 {
        return Err(Error::invalid(
            "Cramér's V needs n > 0 and at least a 2×2 table",
        ));
    }
    Ok((chi2 / (n as f64 * (m - 1) as f64)).sqrt().clamp(0.0, 1.0))
}

/// Everything measured on one set of test predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
    pub weighted: MetricSet,
    /// `None` when the test labels hold a single class.
    pub auc: Option<f64>,
    pub flags: Vec<String>,
}

pub fn evaluate(
    y_true: &[u8],
    scores: &[f64],
    threshold: f64,
) -> Result<(EvaluationReport, Option<RocCurve>)> {
    let pred = crate::classifiers::predict_labels(scores, threshold);
    let cm = confusion(y_true, &pred)?;
    let mut flags = Vec::new();
    let roc = if cm.positives() > 0 && cm.negatives() > 0 {
        Some(roc_auc(y_true, scores)?)
    } else {
        flags.push("single_class_test".to_string());
        None
    };
    let metrics = metric_set(&cm);
    if metrics.precision_undefined {
        flags.push("precision_undefined".into());
    }
    if metrics.recall_undefined {
        flags.push("recall_undefined".into());
    }
    Ok((
        EvaluationReport {
            n: y_true.len(),
            threshold,
            confusion: cm,
            metrics,
            weighted: weighted_metric_set(&cm),
            auc: roc.as_ref().map(|r| r.auc),
            flags,
        },
        roc,
    ))
}

pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fpr", "tpr", "threshold"])?;
    for p in &curve.points {
        w.write_record([
            p.fpr.to_string(),
            p.tpr.to_string(),
            p.threshold.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_violin_csv(path: &Path, d: &RateDistributions) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["replicate", "fpr", "tpr"])?;
    for (i, (f, t)) in d.fpr.iter().zip(&d.tpr).enumerate() {
        w.write_record([i.to_string(), f.to_string(), t.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
