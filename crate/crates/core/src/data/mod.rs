//! Tabular datasets with typed feature columns, a shared target, and
//! per-feature lineage.
//!
//! A [`Dataset`] is immutable once built. Columns and the target are held
//! behind `Arc`, so datasets derived from one another share storage for every
//! feature they have in common.

mod io;
mod lineage;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Datelike, Timelike};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use io::{load_dataset, write_csv, Schema, DEFAULT_DATETIME_FORMAT};
pub use lineage::{Lineage, LineageParseError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("unparseable target value {value:?} on data row {row}")]
    BadTarget { row: usize, value: String },
    #[error("incompatible operands: {0}")]
    IncompatibleOperands(String),
    #[error("column {column:?} has {actual} values, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        actual: usize,
    },
    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Numeric,
    Categorical,
    Datetime,
    #[serde(rename = "string")]
    Text,
}

impl DType {
    pub fn as_str(self) -> &'static str {
        match self {
            DType::Numeric => "numeric",
            DType::Categorical => "categorical",
            DType::Datetime => "datetime",
            DType::Text => "string",
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Regression => "regression",
        }
    }
}

/// Column storage. Numeric missing values are `NaN`; the other variants use
/// `None`. Datetimes are seconds since the Unix epoch (UTC).
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    Numeric(Vec<f64>),
    Categorical(Vec<Option<String>>),
    Datetime(Vec<Option<i64>>),
    Text(Vec<Option<String>>),
}

impl ColumnValues {
    pub fn dtype(&self) -> DType {
        match self {
            ColumnValues::Numeric(_) => DType::Numeric,
            ColumnValues::Categorical(_) => DType::Categorical,
            ColumnValues::Datetime(_) => DType::Datetime,
            ColumnValues::Text(_) => DType::Text,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnValues::Numeric(v) => v.len(),
            ColumnValues::Categorical(v) | ColumnValues::Text(v) => v.len(),
            ColumnValues::Datetime(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnValues::Numeric(v) => v[row].is_nan(),
            ColumnValues::Categorical(v) | ColumnValues::Text(v) => v[row].is_none(),
            ColumnValues::Datetime(v) => v[row].is_none(),
        }
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            ColumnValues::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_labels(&self) -> Option<&[Option<String>]> {
        match self {
            ColumnValues::Categorical(v) | ColumnValues::Text(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_datetime(&self) -> Option<&[Option<i64>]> {
        match self {
            ColumnValues::Datetime(v) => Some(v),
            _ => None,
        }
    }

    fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.dtype().as_str().as_bytes());
        h.update((self.len() as u64).to_le_bytes());
        match self {
            ColumnValues::Numeric(v) => {
                for x in v {
                    let bits = if x.is_nan() { u64::MAX } else { x.to_bits() };
                    h.update(bits.to_le_bytes());
                }
            }
            ColumnValues::Categorical(v) | ColumnValues::Text(v) => {
                for x in v {
                    match x {
                        None => h.update([0u8]),
                        Some(s) => {
                            h.update([1u8]);
                            h.update((s.len() as u64).to_le_bytes());
                            h.update(s.as_bytes());
                        }
                    }
                }
            }
            ColumnValues::Datetime(v) => {
                for x in v {
                    match x {
                        None => h.update([0u8]),
                        Some(t) => {
                            h.update([1u8]);
                            h.update(t.to_le_bytes());
                        }
                    }
                }
            }
        }
        h.finalize().into()
    }
}

/// A named, typed feature. The name is always the rendered lineage.
#[derive(Debug, Clone)]
pub struct FeatureColumn {
    name: String,
    lineage: Lineage,
    values: ColumnValues,
    digest: [u8; 32],
}

impl FeatureColumn {
    pub fn original(name: impl Into<String>, values: ColumnValues) -> Self {
        Self::derived(Lineage::original(name), values)
    }

    pub fn derived(lineage: Lineage, values: ColumnValues) -> Self {
        let digest = values.digest();
        FeatureColumn {
            name: lineage.render(),
            lineage,
            values,
            digest,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub fn values(&self) -> &ColumnValues {
        &self.values
    }

    pub fn dtype(&self) -> DType {
        self.values.dtype()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Digest of the stored values (not the name).
    pub fn value_digest(&self) -> &[u8; 32] {
        &self.digest
    }

    /// True when both columns hold the same values, regardless of name.
    pub fn same_values(&self, other: &FeatureColumn) -> bool {
        self.digest == other.digest
    }
}

impl PartialEq for FeatureColumn {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.digest == other.digest
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetValues {
    /// Class codes index into `labels`, which are sorted.
    Classes {
        codes: Vec<u32>,
        labels: Vec<String>,
    },
    Real(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Target {
    name: String,
    values: TargetValues,
}

impl Target {
    pub fn real(name: impl Into<String>, values: Vec<f64>) -> Self {
        Target {
            name: name.into(),
            values: TargetValues::Real(values),
        }
    }

    /// Builds a classification target from raw labels. Codes follow the
    /// sorted order of the distinct labels.
    pub fn classes<S: AsRef<str>>(name: impl Into<String>, raw: &[S]) -> Self {
        let labels: Vec<String> = raw
            .iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = raw
            .iter()
            .map(|s| {
                labels
                    .binary_search_by(|l| l.as_str().cmp(s.as_ref()))
                    .unwrap() as u32
            })
            .collect();
        Target {
            name: name.into(),
            values: TargetValues::Classes { codes, labels },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &TargetValues {
        &self.values
    }

    pub fn task_kind(&self) -> TaskKind {
        match self.values {
            TargetValues::Classes { .. } => TaskKind::Classification,
            TargetValues::Real(_) => TaskKind::Regression,
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            TargetValues::Classes { codes, .. } => codes.len(),
            TargetValues::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_count(&self) -> usize {
        match &self.values {
            TargetValues::Classes { labels, .. } => labels.len(),
            TargetValues::Real(_) => 0,
        }
    }

    /// Target as reals: class codes for classification.
    pub fn as_f64(&self) -> Vec<f64> {
        match &self.values {
            TargetValues::Classes { codes, .. } => codes.iter().map(|&c| f64::from(c)).collect(),
            TargetValues::Real(v) => v.clone(),
        }
    }

    fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.task_kind().as_str().as_bytes());
        match &self.values {
            TargetValues::Classes { codes, labels } => {
                for l in labels {
                    h.update((l.len() as u64).to_le_bytes());
                    h.update(l.as_bytes());
                }
                for c in codes {
                    h.update(c.to_le_bytes());
                }
            }
            TargetValues::Real(v) => {
                for x in v {
                    h.update(x.to_bits().to_le_bytes());
                }
            }
        }
        h.finalize().into()
    }
}

impl PartialEq for Target {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.digest() == other.digest()
    }
}

/// Fixed-length content digest of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub [u8; 32]);

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<Arc<FeatureColumn>>,
    target: Arc<Target>,
    target_digest: [u8; 32],
}

impl Dataset {
    pub fn new(features: Vec<FeatureColumn>, target: Target) -> Result<Self, DataError> {
        Self::from_shared(
            features.into_iter().map(Arc::new).collect(),
            Arc::new(target),
        )
    }

    pub fn from_shared(
        features: Vec<Arc<FeatureColumn>>,
        target: Arc<Target>,
    ) -> Result<Self, DataError> {
        let rows = target.len();
        let mut seen = HashSet::with_capacity(features.len());
        for f in &features {
            if f.len() != rows {
                return Err(DataError::LengthMismatch {
                    column: f.name().to_string(),
                    expected: rows,
                    actual: f.len(),
                });
            }
            if !seen.insert(f.name()) {
                return Err(DataError::DuplicateFeature(f.name().to_string()));
            }
        }
        let target_digest = target.digest();
        Ok(Dataset {
            features,
            target,
            target_digest,
        })
    }

    /// Same target, different feature list.
    pub fn with_features(&self, features: Vec<Arc<FeatureColumn>>) -> Result<Self, DataError> {
        let rows = self.row_count();
        let mut seen = HashSet::with_capacity(features.len());
        for f in &features {
            if f.len() != rows {
                return Err(DataError::LengthMismatch {
                    column: f.name().to_string(),
                    expected: rows,
                    actual: f.len(),
                });
            }
            if !seen.insert(f.name()) {
                return Err(DataError::DuplicateFeature(f.name().to_string()));
            }
        }
        Ok(Dataset {
            features,
            target: Arc::clone(&self.target),
            target_digest: self.target_digest,
        })
    }

    pub fn features(&self) -> &[Arc<FeatureColumn>] {
        &self.features
    }

    pub fn feature(&self, name: &str) -> Option<&Arc<FeatureColumn>> {
        self.features.iter().find(|f| f.name() == name)
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn row_count(&self) -> usize {
        self.target.len()
    }

    pub fn target(&self) -> &Arc<Target> {
        &self.target
    }

    pub fn task_kind(&self) -> TaskKind {
        self.target.task_kind()
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name()).collect()
    }

    pub fn lineage_set(&self) -> BTreeSet<&str> {
        self.features.iter().map(|f| f.name()).collect()
    }

    pub fn has_dtype(&self, dtype: DType) -> bool {
        self.features.iter().any(|f| f.dtype() == dtype)
    }

    /// Shares the same target values (and therefore the same root).
    pub fn same_target(&self, other: &Dataset) -> bool {
        Arc::ptr_eq(&self.target, &other.target) || self.target_digest == other.target_digest
    }

    /// Feature-set union keyed by lineage, sorted by canonical lineage string.
    pub fn sum(&self, other: &Dataset) -> Result<Dataset, DataError> {
        if self.row_count() != other.row_count() {
            return Err(DataError::IncompatibleOperands(format!(
                "row counts differ ({} vs {})",
                self.row_count(),
                other.row_count()
            )));
        }
        if !self.same_target(other) {
            return Err(DataError::IncompatibleOperands("targets differ".into()));
        }
        let mut merged: Vec<Arc<FeatureColumn>> = self.features.clone();
        let names: HashSet<&str> = self.features.iter().map(|f| f.name()).collect();
        merged.extend(
            other
                .features
                .iter()
                .filter(|f| !names.contains(f.name()))
                .cloned(),
        );
        merged.sort_by(|a, b| a.name().cmp(b.name()));
        self.with_features(merged)
    }

    /// Content digest over the feature set (order-independent), values and
    /// target.
    pub fn signature(&self) -> Signature {
        let mut cols: Vec<&FeatureColumn> = self.features.iter().map(|f| f.as_ref()).collect();
        cols.sort_by(|a, b| a.name().cmp(b.name()));
        let mut h = Sha256::new();
        h.update((self.row_count() as u64).to_le_bytes());
        h.update(self.target_digest);
        for c in cols {
            h.update((c.name().len() as u64).to_le_bytes());
            h.update(c.name().as_bytes());
            h.update(c.value_digest());
        }
        Signature(h.finalize().into())
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.target.name() == other.target.name()
            && self.target_digest == other.target_digest
            && self.features.len() == other.features.len()
            && self
                .features
                .iter()
                .zip(&other.features)
                .all(|(a, b)| a.as_ref() == b.as_ref())
    }
}

/// Free-function form of [`Dataset::sum`].
pub fn dataset_sum(a: &Dataset, b: &Dataset) -> Result<Dataset, DataError> {
    a.sum(b)
}

/// Free-function form of [`Dataset::signature`].
pub fn dataset_signature(d: &Dataset) -> Signature {
    d.signature()
}

/// Calendar accessors over epoch seconds (UTC).
pub mod calendar {
    use super::*;

    fn at(secs: i64) -> Option<DateTime<chrono::Utc>> {
        DateTime::from_timestamp(secs, 0)
    }

    pub fn hour(secs: i64) -> Option<u32> {
        at(secs).map(|t| t.hour())
    }

    /// Monday = 0.
    pub fn day_of_week(secs: i64) -> Option<u32> {
        at(secs).map(|t| t.weekday().num_days_from_monday())
    }

    pub fn month(secs: i64) -> Option<u32> {
        at(secs).map(|t| t.month())
    }
}
