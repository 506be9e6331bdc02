//! CSV ingestion against a schema sidecar, and CSV export.
//!
//! The sidecar is a small TOML document:
//!
//! ```toml
//! target = "count"
//! task = "regression"
//!
//! [columns]
//! datetime = "datetime"
//! season = "categorical"
//! temp = "numeric"
//!
//! [datetime_formats]
//! datetime = "%Y-%m-%d %H:%M:%S"
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{
    ColumnValues, DType, DataError, Dataset, FeatureColumn, Target, TargetValues, TaskKind,
};

pub const DEFAULT_DATETIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

const FALLBACK_DATETIME_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y/%m/%d %H:%M:%S",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub target: String,
    pub task: TaskKind,
    #[serde(default)]
    pub columns: BTreeMap<String, DType>,
    #[serde(default)]
    pub datetime_formats: BTreeMap<String, String>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Schema, DataError> {
        let schema: Schema =
            toml::from_str(text).map_err(|e| DataError::InvalidSchema(e.to_string()))?;
        for col in schema.datetime_formats.keys() {
            if schema.columns.get(col) != Some(&DType::Datetime) {
                return Err(DataError::InvalidSchema(format!(
                    "datetime format given for non-datetime column {col:?}"
                )));
            }
        }
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Schema, DataError> {
        if !path.is_file() {
            return Err(DataError::MissingFile(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema is always serializable")
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_toml())?;
        Ok(())
    }

    /// Schema describing `d` as written by [`write_csv`].
    pub fn for_dataset(d: &Dataset) -> Schema {
        let mut columns = BTreeMap::new();
        let mut datetime_formats = BTreeMap::new();
        for f in d.features() {
            columns.insert(f.name().to_string(), f.dtype());
            if f.dtype() == DType::Datetime {
                datetime_formats.insert(f.name().to_string(), DEFAULT_DATETIME_FORMAT.to_string());
            }
        }
        Schema {
            target: d.target().name().to_string(),
            task: d.task_kind(),
            columns,
            datetime_formats,
        }
    }
}

fn parse_numeric(cell: &str) -> f64 {
    match cell.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => x,
        _ => f64::NAN,
    }
}

fn parse_datetime(cell: &str, format: Option<&str>) -> Option<i64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return None;
    }
    let try_format = |fmt: &str| {
        NaiveDateTime::parse_from_str(cell, fmt)
            .ok()
            .or_else(|| {
                NaiveDate::parse_from_str(cell, fmt)
                    .ok()
                    .and_then(|d| d.and_hms_opt(0, 0, 0))
            })
            .map(|t| t.and_utc().timestamp())
    };
    match format {
        Some(fmt) => try_format(fmt),
        None => DateTime::parse_from_rfc3339(cell)
            .ok()
            .map(|t| t.timestamp())
            .or_else(|| FALLBACK_DATETIME_FORMATS.iter().find_map(|f| try_format(f)))
            .or_else(|| try_format("%Y-%m-%d")),
    }
}

fn label(cell: &str) -> Option<String> {
    if cell.is_empty() {
        None
    } else {
        Some(cell.to_string())
    }
}

/// Reads `csv_path` typed per `schema`. Unparseable feature cells become
/// missing; an unparseable target is an error.
pub fn load_dataset(csv_path: &Path, schema: &Schema) -> Result<Dataset, DataError> {
    if !csv_path.is_file() {
        return Err(DataError::MissingFile(csv_path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(DataError::SchemaMismatch(format!("duplicate header {h:?}")));
        }
        if h != &schema.target && !schema.columns.contains_key(h) {
            return Err(DataError::SchemaMismatch(format!(
                "header {h:?} is not declared in the schema"
            )));
        }
    }
    if !seen.contains(schema.target.as_str()) {
        return Err(DataError::SchemaMismatch(format!(
            "target column {:?} missing from header",
            schema.target
        )));
    }
    for col in schema.columns.keys() {
        if !seen.contains(col.as_str()) {
            return Err(DataError::SchemaMismatch(format!(
                "schema column {col:?} missing from header"
            )));
        }
    }

    let target_idx = headers.iter().position(|h| h == &schema.target).unwrap();
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != target_idx).collect();
    let mut columns: Vec<ColumnValues> = feature_idx
        .iter()
        .map(|&i| match schema.columns[&headers[i]] {
            DType::Numeric => ColumnValues::Numeric(Vec::new()),
            DType::Categorical => ColumnValues::Categorical(Vec::new()),
            DType::Datetime => ColumnValues::Datetime(Vec::new()),
            DType::Text => ColumnValues::Text(Vec::new()),
        })
        .collect();
    let mut raw_labels = Vec::new();
    let mut reals = Vec::new();

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = &record[target_idx];
        match schema.task {
            TaskKind::Classification => {
                let trimmed = cell.trim();
                if trimmed.is_empty() {
                    return Err(DataError::BadTarget {
                        row: row + 1,
                        value: cell.to_string(),
                    });
                }
                raw_labels.push(trimmed.to_string());
            }
            TaskKind::Regression => match cell.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => reals.push(x),
                _ => {
                    return Err(DataError::BadTarget {
                        row: row + 1,
                        value: cell.to_string(),
                    })
                }
            },
        }
        for (col, &i) in columns.iter_mut().zip(&feature_idx) {
            let cell = &record[i];
            match col {
                ColumnValues::Numeric(v) => v.push(parse_numeric(cell)),
                ColumnValues::Categorical(v) | ColumnValues::Text(v) => v.push(label(cell)),
                ColumnValues::Datetime(v) => v.push(parse_datetime(
                    cell,
                    schema.datetime_formats.get(&headers[i]).map(String::as_str),
                )),
            }
        }
    }

    let target = match schema.task {
        TaskKind::Classification => Target::classes(schema.target.clone(), &raw_labels),
        TaskKind::Regression => Target::real(schema.target.clone(), reals),
    };
    if target.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let features = feature_idx
        .iter()
        .zip(columns)
        .map(|(&i, values)| FeatureColumn::original(headers[i].clone(), values))
        .collect();
    Dataset::new(features, target)
}

fn format_datetime(secs: i64) -> String {
    DateTime::from_timestamp(secs, 0)
        .map(|t| t.format(DEFAULT_DATETIME_FORMAT).to_string())
        .unwrap_or_default()
}

/// Writes features (in dataset order) followed by the target column.
/// Numeric values use the shortest round-trip representation.
pub fn write_csv(d: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = d.feature_names();
    header.push(d.target().name());
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for row in 0..d.row_count() {
        record.clear();
        for f in d.features() {
            record.push(match f.values() {
                ColumnValues::Numeric(v) if v[row].is_nan() => String::new(),
                ColumnValues::Numeric(v) => v[row].to_string(),
                ColumnValues::Categorical(v) | ColumnValues::Text(v) => {
                    v[row].clone().unwrap_or_default()
                }
                ColumnValues::Datetime(v) => v[row].map(format_datetime).unwrap_or_default(),
            });
        }
        record.push(match d.target().values() {
            TargetValues::Classes { codes, labels } => labels[codes[row] as usize].clone(),
            TargetValues::Real(v) => v[row].to_string(),
        });
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
