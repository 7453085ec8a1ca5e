//! Ingestion of person-course records: loading, cleaning, encoding, scaling and splitting.
//!
//! The flow is `load_person_course -> clean -> Encoder::fit/transform -> LabeledDataset`,
//! after which `fit_normalizer`/`apply_normalizer` and `stratified_split` operate on the
//! numeric form.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Binary,
    Count,
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureRole {
    Background,
    Behavior,
}

/// How a categorical column becomes a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoricalEncoding {
    /// Two levels mapped to 0 and 1 in sorted (or declared) order.
    Binary,
    /// Share of fitting rows carrying the level.
    #[default]
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub role: FeatureRole,
    /// Source CSV column; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<CategoricalEncoding>,
    /// Accepted levels for a categorical column. Any other value marks the row inconsistent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    /// When set, the source column holds a birth year and the feature is `reference - year`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_reference_year: Option<f64>,
}

impl FeatureSpec {
    pub fn new(name: &str, kind: FeatureKind, role: FeatureRole) -> Self {
        Self {
            name: name.to_string(),
            kind,
            role,
            column: None,
            encoding: None,
            levels: None,
            age_reference_year: None,
        }
    }

    pub fn source_column(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.name)
    }
}

fn default_missing_markers() -> Vec<String> {
    ["", "NA", "na", "NaN", "nan", "null", "NULL"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_column: Option<String>,
    /// Columns whose truthy value marks a record as problematic.
    #[serde(default)]
    pub flag_columns: Vec<String>,
    #[serde(default = "default_missing_markers")]
    pub missing_markers: Vec<String>,
}

impl FeatureSchema {
    /// The ten-feature person-course schema: three background and seven behavior
    /// variables with `certified` as the outcome.
    pub fn edx() -> Self {
        use FeatureKind::*;
        use FeatureRole::*;
        let mut gender = FeatureSpec::new("gender", Categorical, Background);
        gender.encoding = Some(CategoricalEncoding::Binary);
        gender.levels = Some(vec!["f".into(), "m".into()]);
        let mut country = FeatureSpec::new("country", Categorical, Background);
        country.encoding = Some(CategoricalEncoding::Frequency);
        Self {
            features: vec![
                FeatureSpec::new("age", Continuous, Background),
                gender,
                country,
                FeatureSpec::new("viewed", Binary, Behavior),
                FeatureSpec::new("explored", Binary, Behavior),
                FeatureSpec::new("ndays_act", Count, Behavior),
                FeatureSpec::new("nevents", Count, Behavior),
                FeatureSpec::new("nplay_video", Count, Behavior),
                FeatureSpec::new("nchapters", Count, Behavior),
                FeatureSpec::new("nforum_posts", Count, Behavior),
            ],
            outcome: "certified".into(),
            outcome_column: None,
            flag_columns: Vec::new(),
            missing_markers: default_missing_markers(),
        }
    }

    /// The raw HarvardX/MITx person-course export: age derived from `YoB`, country from
    /// `final_cc_cname_DI`, and `incomplete_flag` marking problematic rows.
    pub fn edx_person_course_export() -> Self {
        let mut s = Self::edx();
        for f in &mut s.features {
            match f.name.as_str() {
                "age" => {
                    f.column = Some("YoB".into());
                    f.age_reference_year = Some(2014.0);
                }
                "country" => f.column = Some("final_cc_cname_DI".into()),
                _ => {}
            }
        }
        s.flag_columns = vec!["incomplete_flag".into()];
        s
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: Self = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::invalid("schema has no features"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
            if f.kind != FeatureKind::Categorical && (f.encoding.is_some() || f.levels.is_some()) {
                return Err(Error::invalid(format!(
                    "feature `{}` is not categorical but declares an encoding",
                    f.name
                )));
            }
            if f.encoding == Some(CategoricalEncoding::Binary) {
                if let Some(levels) = &f.levels {
                    if levels.len() != 2 {
                        return Err(Error::invalid(format!(
                            "binary-encoded feature `{}` must declare exactly two levels",
                            f.name
                        )));
                    }
                }
            }
        }
        if seen.contains(self.outcome.as_str()) {
            return Err(Error::invalid(format!(
                "outcome `{}` is also listed as a feature",
                self.outcome
            )));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn indices_with_role(&self, role: FeatureRole) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn outcome_source(&self) -> &str {
        self.outcome_column.as_deref().unwrap_or(&self.outcome)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
}

impl RawColumn {
    fn len(&self) -> usize {
        match self {
            RawColumn::Numeric(v) => v.len(),
            RawColumn::Text(v) => v.len(),
        }
    }

    fn is_missing(&self, i: usize) -> bool {
        match self {
            RawColumn::Numeric(v) => v[i].is_none(),
            RawColumn::Text(v) => v[i].is_none(),
        }
    }

    fn retain(&self, keep: &[usize]) -> Self {
        match self {
            RawColumn::Numeric(v) => RawColumn::Numeric(keep.iter().map(|&i| v[i]).collect()),
            RawColumn::Text(v) => RawColumn::Text(keep.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// Records as read from disk: typed per the schema, with missing cells and flags intact.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: FeatureSchema,
    pub columns: Vec<RawColumn>,
    pub outcome: Vec<Option<f64>>,
    /// A row is flagged when any schema flag column held a truthy value.
    pub flagged: Vec<bool>,
    /// 1-based data-row number in the source file.
    pub source_rows: Vec<usize>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    fn retain(&self, keep: &[usize]) -> Self {
        RawTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.retain(keep)).collect(),
            outcome: keep.iter().map(|&i| self.outcome[i]).collect(),
            flagged: keep.iter().map(|&i| self.flagged[i]).collect(),
            source_rows: keep.iter().map(|&i| self.source_rows[i]).collect(),
        }
    }

    /// Numeric view of a text column, mainly for tests and reports.
    pub fn text_column(&self, feature: &str) -> Option<&[Option<String>]> {
        let j = self.schema.index_of(feature)?;
        match &self.columns[j] {
            RawColumn::Text(v) => Some(v),
            RawColumn::Numeric(_) => None,
        }
    }

    pub fn numeric_column(&self, feature: &str) -> Option<&[Option<f64>]> {
        let j = self.schema.index_of(feature)?;
        match &self.columns[j] {
            RawColumn::Numeric(v) => Some(v),
            RawColumn::Text(_) => None,
        }
    }

    /// Assembles a table from already-typed columns (used by the synthetic generator).
    pub fn from_columns(
        schema: FeatureSchema,
        columns: Vec<RawColumn>,
        outcome: Vec<Option<f64>>,
    ) -> Result<Self> {
        schema.validate()?;
        if columns.len() != schema.features.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.features.len(),
                got: columns.len(),
            });
        }
        let n = outcome.len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("columns differ in length"));
        }
        for (f, c) in schema.features.iter().zip(&columns) {
            let text = matches!(c, RawColumn::Text(_));
            if text != (f.kind == FeatureKind::Categorical) {
                return Err(Error::invalid(format!(
                    "column type of `{}` does not match its kind",
                    f.name
                )));
            }
        }
        Ok(RawTable {
            schema,
            columns,
            outcome,
            flagged: vec![false; n],
            source_rows: (1..=n).collect(),
        })
    }
}

fn is_truthy(cell: &str) -> bool {
    let t = cell.trim();
    !(t.is_empty()
        || t == "0"
        || t.eq_ignore_ascii_case("false")
        || t.eq_ignore_ascii_case("na")
        || t.eq_ignore_ascii_case("nan"))
}

pub fn load_person_course(path: &Path, schema: &FeatureSchema) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_person_course(file, schema)
}

pub fn read_person_course<R: Read>(reader: R, schema: &FeatureSchema) -> Result<RawTable> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(_) => return Err(Error::NoRows),
    };
    if headers.is_empty() {
        return Err(Error::NoRows);
    }
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let feature_cols = schema
        .features
        .iter()
        .map(|f| find(f.source_column()))
        .collect::<Result<Vec<_>>>()?;
    let outcome_col = find(schema.outcome_source())?;
    let flag_cols = schema
        .flag_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let is_missing = |cell: &str| schema.missing_markers.iter().any(|m| m == cell.trim());
    let parse = |cell: &str, row: usize, column: &str| -> Result<Option<f64>> {
        if is_missing(cell) {
            return Ok(None);
        }
        cell.trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::ParseCell {
                row,
                column: column.to_string(),
                value: cell.to_string(),
            })
    };

    let mut columns: Vec<RawColumn> = schema
        .features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Categorical => RawColumn::Text(Vec::new()),
            _ => RawColumn::Numeric(Vec::new()),
        })
        .collect();
    let mut outcome = Vec::new();
    let mut flagged = Vec::new();
    let mut source_rows = Vec::new();

    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        for ((f, &c), col) in schema.features.iter().zip(&feature_cols).zip(&mut columns) {
            let cell = rec.get(c).unwrap_or("");
            match col {
                RawColumn::Text(v) => {
                    v.push(if is_missing(cell) {
                        None
                    } else {
                        Some(cell.trim().to_string())
                    });
                }
                RawColumn::Numeric(v) => {
                    let mut value = parse(cell, row, f.source_column())?;
                    if let (Some(year), Some(reference)) = (value, f.age_reference_year) {
                        value = Some(reference - year);
                    }
                    v.push(value);
                }
            }
        }
        outcome.push(parse(
            rec.get(outcome_col).unwrap_or(""),
            row,
            schema.outcome_source(),
        )?);
        flagged.push(
            flag_cols
                .iter()
                .any(|&c| is_truthy(rec.get(c).unwrap_or(""))),
        );
        source_rows.push(row);
    }
    if outcome.is_empty() {
        return Err(Error::NoRows);
    }
    Ok(RawTable {
        schema: schema.clone(),
        columns,
        outcome,
        flagged,
        source_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub kept: usize,
    pub dropped: usize,
}

fn is_binary(v: f64) -> bool {
    v == 0.0 || v == 1.0
}

fn row_is_consistent(table: &RawTable, i: usize) -> bool {
    if table.flagged[i] {
        return false;
    }
    match table.outcome[i] {
        Some(v) if is_binary(v) => {}
        _ => return false,
    }
    for (f, col) in table.schema.features.iter().zip(&table.columns) {
        if col.is_missing(i) {
            return false;
        }
        match (f.kind, col) {
            (FeatureKind::Binary, RawColumn::Numeric(v)) => {
                if !is_binary(v[i].unwrap()) {
                    return false;
                }
            }
            (FeatureKind::Count, RawColumn::Numeric(v)) => {
                let x = v[i].unwrap();
                if !(x >= 0.0 && x.is_finite()) {
                    return false;
                }
            }
            (FeatureKind::Continuous, RawColumn::Numeric(v)) => {
                if !v[i].unwrap().is_finite() {
                    return false;
                }
            }
            (FeatureKind::Categorical, RawColumn::Text(v)) => {
                if let Some(levels) = &f.levels {
                    let cell = v[i].as_deref().unwrap();
                    if !levels.iter().any(|l| l == cell) {
                        return false;
                    }
                }
            }
            _ => return false,
        }
    }
    true
}

/// Drops every row with a missing schema value, a truthy flag, or a value outside its
/// feature's domain (non-binary flags, negative counts, undeclared levels).
pub fn clean(table: &RawTable) -> Result<(RawTable, CleanReport)> {
    let keep: Vec<usize> = (0..table.len())
        .filter(|&i| row_is_consistent(table, i))
        .collect();
    if keep.is_empty() {
        return Err(Error::invalid("all rows dropped during cleaning"));
    }
    let report = CleanReport {
        kept: keep.len(),
        dropped: table.len() - keep.len(),
    };
    Ok((table.retain(&keep), report))
}

/// Numeric features with a binary outcome; the input of every downstream stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub feature_names: Vec<String>,
    pub outcome: String,
}

impl LabeledDataset {
    pub fn new(x: Matrix, y: Vec<u8>, feature_names: Vec<String>, outcome: String) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if x.cols() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len(),
                got: x.cols(),
            });
        }
        if !x.all_finite() {
            return Err(Error::NonFinite("feature matrix"));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            outcome,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            outcome: self.outcome.clone(),
        }
    }

    pub fn select_features(&self, cols: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: self.x.select_cols(cols),
            y: self.y.clone(),
            feature_names: cols
                .iter()
                .map(|&j| self.feature_names[j].clone())
                .collect(),
            outcome: self.outcome.clone(),
        }
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(self.outcome.clone());
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for (row, &label) in self.x.iter_rows().zip(&self.y) {
            rec.clear();
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a file written by [`LabeledDataset::write_csv`]: every column numeric, the
    /// last one the outcome.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(Error::invalid(
                "dataset CSV needs at least one feature and the outcome",
            ));
        }
        let names: Vec<String> = headers.iter().map(str::to_string).collect();
        let p = names.len() - 1;
        let mut data = Vec::new();
        let mut y = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (j, cell) in rec.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::ParseCell {
                    row: i + 1,
                    column: names[j].clone(),
                    value: cell.to_string(),
                })?;
                if j < p {
                    data.push(v);
                } else if is_binary(v) {
                    y.push(v as u8);
                } else {
                    return Err(Error::invalid(format!(
                        "row {}: outcome must be 0 or 1",
                        i + 1
                    )));
                }
            }
        }
        if y.is_empty() {
            return Err(Error::NoRows);
        }
        let x = Matrix::new(y.len(), p, data)?;
        LabeledDataset::new(x, y, names[..p].to_vec(), names[p].clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FeatureEncoding {
    Identity,
    Binary { levels: Vec<String> },
    Frequency { shares: BTreeMap<String, f64> },
}

/// Replayable mapping from a cleaned [`RawTable`] to numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub feature_names: Vec<String>,
    pub outcome: String,
    pub encodings: Vec<FeatureEncoding>,
}

impl Encoder {
    pub fn fit(table: &RawTable) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::NoRows);
        }
        let n = table.len() as f64;
        let mut encodings = Vec::with_capacity(table.columns.len());
        for (f, col) in table.schema.features.iter().zip(&table.columns) {
            let enc = match col {
                RawColumn::Numeric(_) => FeatureEncoding::Identity,
                RawColumn::Text(values) => {
                    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                    for v in values {
                        let v = v.as_ref().ok_or_else(|| {
                            Error::invalid(format!("missing value in `{}`; clean first", f.name))
                        })?;
                        *counts.entry(v.clone()).or_default() += 1;
                    }
                    match f.encoding.unwrap_or_default() {
                        CategoricalEncoding::Binary => {
                            let levels = match &f.levels {
                                Some(l) => l.clone(),
                                None => counts.keys().cloned().collect(),
                            };
                            if levels.len() > 2 {
                                return Err(Error::invalid(format!(
                                    "feature `{}` has {} levels; binary encoding needs at most 2",
                                    f.name,
                                    levels.len()
                                )));
                            }
                            FeatureEncoding::Binary { levels }
                        }
                        CategoricalEncoding::Frequency => FeatureEncoding::Frequency {
                            shares: counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
                        },
                    }
                }
            };
            encodings.push(enc);
        }
        Ok(Self {
            feature_names: table.schema.feature_names(),
            outcome: table.schema.outcome.clone(),
            encodings,
        })
    }

    pub fn transform(&self, table: &RawTable) -> Result<LabeledDataset> {
        if table.columns.len() != self.encodings.len() {
            return Err(Error::DimensionMismatch {
                expected: self.encodings.len(),
                got: table.columns.len(),
            });
        }
        let n = table.len();
        let p = self.encodings.len();
        let mut x = Matrix::zeros(n, p);
        for (j, (enc, col)) in self.encodings.iter().zip(&table.columns).enumerate() {
            let name = &self.feature_names[j];
            for i in 0..n {
                let v = match (enc, col) {
                    (FeatureEncoding::Identity, RawColumn::Numeric(v)) => {
                        v[i].ok_or_else(|| {
                            Error::invalid(format!("missing value in `{name}`; clean first"))
                        })?
                    }
                    (FeatureEncoding::Binary { levels }, RawColumn::Text(v)) => {
                        let cell = v[i].as_deref().unwrap_or("");
                        levels.iter().position(|l| l == cell).ok_or_else(|| {
                            Error::UnseenCategory {
                                feature: name.clone(),
                                value: cell.to_string(),
                            }
                        })? as f64
                    }
                    (FeatureEncoding::Frequency { shares }, RawColumn::Text(v)) => {
                        let cell = v[i].as_deref().unwrap_or("");
                        *shares.get(cell).ok_or_else(|| Error::UnseenCategory {
                            feature: name.clone(),
                            value: cell.to_string(),
                        })?
                    }
                    _ => {
                        return Err(Error::invalid(format!(
                            "column `{name}` does not match its fitted encoding"
                        )))
                    }
                };
                x.set(i, j, v);
            }
        }
        let y = table
            .outcome
            .iter()
            .map(|v| match v {
                Some(v) if is_binary(*v) => Ok(*v as u8),
                _ => Err(Error::invalid("outcome must be 0 or 1; clean first")),
            })
            .collect::<Result<Vec<u8>>>()?;
        LabeledDataset::new(x, y, self.feature_names.clone(), self.outcome.clone())
    }
}

/// clean + fit encoder + transform in one step.
pub fn encode(table: &RawTable) -> Result<(LabeledDataset, Encoder)> {
    let enc = Encoder::fit(table)?;
    let ds = enc.transform(table)?;
    Ok((ds, enc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// (x - min) / (max - min), constant columns to 0.
    #[default]
    MinMax,
    /// (x - mean) / sd with population sd, constant columns to 0.
    ZScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub scaling: Scaling,
    pub features: Vec<FeatureStats>,
}

pub fn fit_normalizer(train: &Matrix, scaling: Scaling) -> Result<NormalizationParams> {
    if train.rows() == 0 {
        return Err(Error::Empty("normalizer training matrix"));
    }
    let n = train.rows() as f64;
    let features = (0..train.cols())
        .map(|j| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let mut sum = 0.0;
            for r in train.iter_rows() {
                min = min.min(r[j]);
                max = max.max(r[j]);
                sum += r[j];
            }
            let mean = sum / n;
            let var = train
                .iter_rows()
                .map(|r| (r[j] - mean) * (r[j] - mean))
                .sum::<f64>()
                / n;
            FeatureStats {
                min,
                max,
                mean,
                sd: var.sqrt(),
            }
        })
        .collect();
    Ok(NormalizationParams { scaling, features })
}

pub fn apply_normalizer(params: &NormalizationParams, x: &Matrix) -> Result<Matrix> {
    if x.cols() != params.features.len() {
        return Err(Error::DimensionMismatch {
            expected: params.features.len(),
            got: x.cols(),
        });
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (v, s) in out.row_mut(i).iter_mut().zip(&params.features) {
            *v = match params.scaling {
                Scaling::MinMax => {
                    let range = s.max - s.min;
                    if range > 0.0 {
                        (*v - s.min) / range
                    } else {
                        0.0
                    }
                }
                Scaling::ZScore => {
                    if s.sd > 0.0 {
                        (*v - s.mean) / s.sd
                    } else {
                        0.0
                    }
                }
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Seeded per-class split. The train size is `round(ratio * n)`, allotted to classes by
/// largest remainder so every class keeps its proportion within one sample.
pub fn stratified_split(y: &[u8], ratio: f64, seed: u64) -> Result<SplitIndices> {
    if !(ratio > 0.0) {
        return Err(Error::invalid("empty train set: split ratio must be > 0"));
    }
    if ratio >= 1.0 {
        return Err(Error::invalid("empty test set: split ratio must be < 1"));
    }
    let classes: [Vec<usize>; 2] = [
        (0..y.len()).filter(|&i| y[i] == 0).collect(),
        (0..y.len()).filter(|&i| y[i] == 1).collect(),
    ];
    if let Some(c) = classes.iter().position(|c| c.is_empty()) {
        return Err(Error::degenerate(format!("class {c} has no samples")));
    }
    let n = y.len();
    let total_train = (ratio * n as f64).round() as usize;
    if total_train == 0 {
        return Err(Error::invalid("empty train set"));
    }
    if total_train >= n {
        return Err(Error::invalid("empty test set"));
    }
    let exact: Vec<f64> = classes.iter().map(|c| ratio * c.len() as f64).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = total_train - take.iter().sum::<usize>();
    let mut order: Vec<usize> = vec![0, 1];
    // larger fractional part first; class 0 wins ties
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(4) {
        if remaining == 0 {
            break;
        }
        if take[c] < classes[c].len() {
            take[c] += 1;
            remaining -= 1;
        }
    }
    let mut rng = rng::from_seed(seed);
    let mut train = Vec::with_capacity(total_train);
    let mut test = Vec::with_capacity(n - total_train);
    for (c, members) in classes.iter().enumerate() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        train.extend_from_slice(&shuffled[..take[c]]);
        test.extend_from_slice(&shuffled[take[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test, seed })
}

/// Plain seeded shuffle split, for partitions that contain a single class.
pub fn random_split(n: usize, ratio: f64, seed: u64) -> Result<SplitIndices> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("split ratio must lie in (0, 1)"));
    }
    let total_train = (ratio * n as f64).round() as usize;
    if total_train == 0 || total_train >= n {
        return Err(Error::invalid("split leaves an empty side"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::from_seed(seed));
    let mut train = idx[..total_train].to_vec();
    let mut test = idx[total_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test, seed })
}

/// Everything needed to replay preprocessing bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSidecar {
    pub schema: FeatureSchema,
    pub encoder: Encoder,
    pub clean_report: CleanReport,
    /// Fitted on every cleaned row; used by pattern discovery, which precedes any split.
    pub full_data_normalizer: NormalizationParams,
}

/// load + clean + encode, with the sidecar needed to replay it.
pub fn ingest(path: &Path, schema: &FeatureSchema) -> Result<(LabeledDataset, PreprocessSidecar)> {
    let raw = load_person_course(path, schema)?;
    let (cleaned, clean_report) = clean(&raw)?;
    let (ds, encoder) = encode(&cleaned)?;
    let full_data_normalizer = fit_normalizer(&ds.x, Scaling::ZScore)?;
    Ok((
        ds,
        PreprocessSidecar {
            schema: schema.clone(),
            encoder,
            clean_report,
            full_data_normalizer,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str =
        "age,gender,country,viewed,explored,ndays_act,nevents,nplay_video,nchapters,nforum_posts,certified";

    fn csv_of(rows: &[&str]) -> String {
        let mut s = String::from(HEADER);
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    fn load(rows: &[&str]) -> Result<RawTable> {
        read_person_course(csv_of(rows).as_bytes(), &FeatureSchema::edx())
    }

    #[test]
    fn canonical_schema_shape() {
        let s = FeatureSchema::edx();
        s.validate().unwrap();
        assert_eq!(s.features.len(), 10);
        assert_eq!(s.indices_with_role(FeatureRole::Background).len(), 3);
        assert_eq!(s.indices_with_role(FeatureRole::Behavior).len(), 7);
    }

    #[test]
    fn loads_all_eleven_columns() {
        let t = load(&[
            "30,m,US,1,0,3,100,20,2,0,0",
            "41,f,IN,1,1,40,5000,900,14,1,1",
        ])
        .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.columns.len() + 1, 11);
        assert_eq!(t.numeric_column("nevents").unwrap()[1], Some(5000.0));
        assert_eq!(t.text_column("country").unwrap()[0].as_deref(), Some("US"));
    }

    #[test]
    fn empty_file_is_no_rows() {
        assert!(matches!(
            read_person_course("".as_bytes(), &FeatureSchema::edx()),
            Err(Error::NoRows)
        ));
        assert!(matches!(load(&[]), Err(Error::NoRows)));
    }

    #[test]
    fn missing_column_is_named() {
        let text = "age,gender\n1,m";
        match read_person_course(text.as_bytes(), &FeatureSchema::edx()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "country"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unparseable_cell_reports_row() {
        match load(&["30,m,US,1,0,3,100,20,2,0,0", "30,m,US,1,0,3,lots,20,2,0,0"]) {
            Err(Error::ParseCell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "nevents");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blank_cell_loads_as_missing_then_cleaned() {
        let t = load(&["30,m,US,1,0,3,,20,2,0,0", "31,f,US,1,0,3,7,20,2,0,1"]).unwrap();
        assert_eq!(t.numeric_column("nevents").unwrap()[0], None);
        let (c, rep) = clean(&t).unwrap();
        assert_eq!(
            rep,
            CleanReport {
                kept: 1,
                dropped: 1
            }
        );
        assert_eq!(c.source_rows, vec![2]);
    }

    #[test]
    fn clean_keeps_valid_table_and_drops_missing_age() {
        let valid = load(&["30,m,US,1,0,3,10,20,2,0,0", "31,f,US,1,0,3,7,20,2,0,1"]).unwrap();
        let (c, rep) = clean(&valid).unwrap();
        assert_eq!(rep.dropped, 0);
        assert_eq!(c, valid);

        let t = load(&[
            ",m,US,1,0,3,10,20,2,0,0",
            "31,f,US,1,0,3,7,20,2,0,1",
            "33,m,FR,0,0,0,0,0,0,0,0",
        ])
        .unwrap();
        let (c, rep) = clean(&t).unwrap();
        assert_eq!((rep.kept, rep.dropped), (2, 1));
        assert_eq!(c.source_rows, vec![2, 3]);
    }

    #[test]
    fn clean_drops_inconsistent_and_flagged() {
        let mut schema = FeatureSchema::edx();
        schema.flag_columns = vec!["incomplete_flag".into()];
        let text = format!(
            "{HEADER},incomplete_flag\n30,m,US,1,0,3,10,20,2,0,0,\n30,m,US,2,0,3,10,20,2,0,0,\n30,o,US,1,0,3,10,20,2,0,0,\n30,m,US,1,0,-3,10,20,2,0,0,\n30,m,US,1,0,3,10,20,2,0,0,1"
        );
        let t = read_person_course(text.as_bytes(), &schema).unwrap();
        let (c, rep) = clean(&t).unwrap();
        assert_eq!(
            rep,
            CleanReport {
                kept: 1,
                dropped: 4
            }
        );
        assert_eq!(c.source_rows, vec![1]);
    }

    #[test]
    fn clean_all_dropped_errors() {
        let t = load(&[",m,US,1,0,3,10,20,2,0,0"]).unwrap();
        assert!(clean(&t).is_err());
    }

    #[test]
    fn frequency_and_binary_encoding() {
        let t = load(&[
            "30,m,US,1,0,3,10,20,2,0,0",
            "31,f,US,1,0,3,7,20,2,0,1",
            "32,f,US,0,1,3,7,20,2,0,1",
            "33,m,FR,0,0,3,7,20,2,0,0",
        ])
        .unwrap();
        let (ds, enc) = encode(&t).unwrap();
        assert_eq!(ds.x.column(2), vec![0.75, 0.75, 0.75, 0.25]);
        assert_eq!(ds.x.column(1), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(ds.x.column(3), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(ds.y, vec![0, 1, 1, 0]);

        let other = load(&["30,m,DE,1,0,3,10,20,2,0,0"]).unwrap();
        assert!(matches!(
            enc.transform(&other),
            Err(Error::UnseenCategory { .. })
        ));
    }

    #[test]
    fn frequency_share_of_largest_country() {
        let share = 25_839.0 / 92_722.0;
        assert!((share - 0.2787_f64).abs() < 5e-5);
    }

    #[test]
    fn birth_year_becomes_age() {
        let mut schema = FeatureSchema::edx();
        schema.features[0].column = Some("YoB".into());
        schema.features[0].age_reference_year = Some(2014.0);
        let text = HEADER.replacen("age", "YoB", 1) + "\n1980,m,US,1,0,3,10,20,2,0,0";
        let t = read_person_course(text.as_bytes(), &schema).unwrap();
        assert_eq!(t.numeric_column("age").unwrap()[0], Some(34.0));
    }

    #[test]
    fn minmax_endpoints_midpoint_and_constant() {
        let x = Matrix::from_rows(&[[0.0, 5.0], [10.0, 5.0], [5.0, 5.0]]).unwrap();
        let p = fit_normalizer(&x, Scaling::MinMax).unwrap();
        let z = apply_normalizer(&p, &x).unwrap();
        assert_eq!(z.column(0), vec![0.0, 1.0, 0.5]);
        assert_eq!(z.column(1), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn zscore_centers_and_scales() {
        let x = Matrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let p = fit_normalizer(&x, Scaling::ZScore).unwrap();
        assert_eq!(apply_normalizer(&p, &x).unwrap().column(0), vec![-1.0, 1.0]);
    }

    #[test]
    fn split_ten_rows_two_positive() {
        let y = [1, 0, 0, 0, 1, 0, 0, 0, 0, 0];
        for seed in 0..20 {
            let s = stratified_split(&y, 0.7, seed).unwrap();
            assert_eq!(s.train.len(), 7);
            let pos = s.train.iter().filter(|&&i| y[i] == 1).count();
            assert!(pos == 1 || pos == 2);
            assert_eq!(s, stratified_split(&y, 0.7, seed).unwrap());
        }
    }

    #[test]
    fn split_rejects_bad_ratio_and_single_class() {
        let y = [0, 1, 0, 1];
        let e = stratified_split(&y, 1.0, 0).unwrap_err();
        assert!(e.to_string().contains("empty test set"));
        assert!(stratified_split(&[0, 0, 0], 0.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_disjoint_exhaustive_and_proportional(
            y in proptest::collection::vec(0u8..2, 4..200),
            ratio in 0.1f64..0.9,
            seed in any::<u64>(),
        ) {
            prop_assume!(y.contains(&0) && y.contains(&1));
            if let Ok(s) = stratified_split(&y, ratio, seed) {
                let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
                for c in 0..2u8 {
                    let n_c = y.iter().filter(|&&v| v == c).count() as f64;
                    let t_c = s.train.iter().filter(|&&i| y[i] == c).count() as f64;
                    prop_assert!((t_c - ratio * n_c).abs() <= 1.0 + 1e-9);
                }
            }
        }

        #[test]
        fn normalized_training_data_lies_in_unit_interval(
            rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 3), 1..40)
        ) {
            let x = Matrix::from_rows(&rows).unwrap();
            let p = fit_normalizer(&x, Scaling::MinMax).unwrap();
            let z = apply_normalizer(&p, &x).unwrap();
            prop_assert!(z.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(p.features.iter().all(|f| f.min <= f.max));
        }

        #[test]
        fn encode_is_row_order_invariant(perm_seed in any::<u64>()) {
            let rows = [
                "30,m,US,1,0,3,10,20,2,0,0",
                "31,f,US,1,0,3,7,20,2,0,1",
                "32,f,IN,0,1,3,7,20,2,0,1",
                "33,m,FR,0,0,3,7,20,2,0,0",
                "34,m,IN,0,0,1,2,0,1,0,0",
            ];
            let mut perm: Vec<usize> = (0..rows.len()).collect();
            perm.shuffle(&mut rng::from_seed(perm_seed));
            let shuffled: Vec<&str> = perm.iter().map(|&i| rows[i]).collect();
            let (a, _) = encode(&load(&rows).unwrap()).unwrap();
            let (b, _) = encode(&load(&shuffled).unwrap()).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(a.x.row(i), b.x.row(k));
                prop_assert_eq!(a.y[i], b.y[k]);
            }
        }

        #[test]
        fn clean_is_idempotent(mask in proptest::collection::vec(any::<bool>(), 6)) {
            let base = ["30,m,US,1,0,3,10,20,2,0,0", "31,f,US,1,0,3,7,20,2,0,1", "32,f,IN,0,1,3,7,20,2,0,1",
                        "33,m,FR,0,0,3,7,20,2,0,0", "34,m,IN,0,0,1,2,0,1,0,0", "35,f,IN,1,1,9,99,9,9,1,1"];
            let rows: Vec<String> = base.iter().zip(&mask).map(|(r, &blank)| {
                if blank { r.replacen("30", "", 1).replacen(",3,", ",,", 1) } else { r.to_string() }
            }).collect();
            let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
            let t = load(&refs).unwrap();
            if let Ok((once, _)) = clean(&t) {
                let (twice, rep) = clean(&once).unwrap();
                prop_assert_eq!(rep.dropped, 0);
                prop_assert_eq!(twice, once);
            }
        }
    }
}
