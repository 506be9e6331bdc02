//! The transformation catalog.
//!
//! A transform is applied in batch: every valid input tuple of a dataset
//! yields one derived feature, and the derived features are appended to the
//! input's features. Feature selection is the one catalog entry that removes
//! features instead; it goes through [`select_features`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{
    calendar, ColumnValues, DType, DataError, Dataset, FeatureColumn, Lineage, TargetValues,
};

/// Upper bound on input pairs per binary application.
pub const MAX_BINARY_PAIRS: usize = 2000;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_MAX_CARDINALITY: usize = 20;
pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_SELECTION_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("{0} has no applicable inputs")]
    NothingApplicable(String),
    #[error("feature selection needs at least 2 features, got {0}")]
    TooFewFeatures(usize),
    #[error("selection fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("feature selection is applied through select_features")]
    SelectionNotApplicable,
    #[error("unknown transform {0:?}")]
    UnknownTransform(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregate {
    Min,
    Max,
    Mean,
    Count,
    Std,
}

impl Aggregate {
    pub const ALL: [Aggregate; 5] = [
        Aggregate::Min,
        Aggregate::Max,
        Aggregate::Mean,
        Aggregate::Count,
        Aggregate::Std,
    ];

    fn op(self) -> &'static str {
        match self {
            Aggregate::Min => "groupmin",
            Aggregate::Max => "groupmax",
            Aggregate::Mean => "groupmean",
            Aggregate::Count => "groupcount",
            Aggregate::Std => "groupstd",
        }
    }

    fn short(self) -> &'static str {
        match self {
            Aggregate::Min => "min",
            Aggregate::Max => "max",
            Aggregate::Mean => "mean",
            Aggregate::Count => "count",
            Aggregate::Std => "std",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Unary,
    Binary,
    GroupBy,
    Selection,
}

impl Arity {
    pub fn as_str(self) -> &'static str {
        match self {
            Arity::Unary => "unary",
            Arity::Binary => "binary",
            Arity::GroupBy => "group-by",
            Arity::Selection => "selection",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Log,
    Square,
    SquareRoot,
    Product,
    ZScore,
    MinMaxNorm,
    TimeBinning,
    GroupByAggregation(Vec<Aggregate>),
    TemporalWindowAggregate { window: usize },
    KTermFrequency,
    Sum,
    Difference,
    Division,
    Sigmoid,
    BinningU { bins: usize },
    BinningD { bins: usize },
    NominalExpansion { max_cardinality: usize },
    Sin,
    Cos,
    TanH,
    FeatureSelection { fraction: f64 },
}

const CATALOG_NAMES: [&str; 21] = [
    "Log",
    "Square",
    "SquareRoot",
    "Product",
    "ZScore",
    "MinMaxNorm",
    "TimeBinning",
    "GroupByAggregation",
    "TemporalWindowAggregate",
    "KTermFrequency",
    "Sum",
    "Difference",
    "Division",
    "Sigmoid",
    "BinningU",
    "BinningD",
    "NominalExpansion",
    "Sin",
    "Cos",
    "TanH",
    "FeatureSelection",
];

impl Transform {
    /// Catalog entry with default parameters.
    pub fn from_name(name: &str) -> Result<Transform, TransformError> {
        Ok(match name {
            "Log" => Transform::Log,
            "Square" => Transform::Square,
            "SquareRoot" => Transform::SquareRoot,
            "Product" => Transform::Product,
            "ZScore" => Transform::ZScore,
            "MinMaxNorm" => Transform::MinMaxNorm,
            "TimeBinning" => Transform::TimeBinning,
            "GroupByAggregation" => Transform::GroupByAggregation(Aggregate::ALL.to_vec()),
            "TemporalWindowAggregate" => Transform::TemporalWindowAggregate {
                window: DEFAULT_WINDOW,
            },
            "KTermFrequency" => Transform::KTermFrequency,
            "Sum" => Transform::Sum,
            "Difference" => Transform::Difference,
            "Division" => Transform::Division,
            "Sigmoid" => Transform::Sigmoid,
            "BinningU" => Transform::BinningU { bins: DEFAULT_BINS },
            "BinningD" => Transform::BinningD { bins: DEFAULT_BINS },
            "NominalExpansion" => Transform::NominalExpansion {
                max_cardinality: DEFAULT_MAX_CARDINALITY,
            },
            "Sin" => Transform::Sin,
            "Cos" => Transform::Cos,
            "TanH" => Transform::TanH,
            "FeatureSelection" => Transform::FeatureSelection {
                fraction: DEFAULT_SELECTION_FRACTION,
            },
            other => return Err(TransformError::UnknownTransform(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transform::Log => "Log",
            Transform::Square => "Square",
            Transform::SquareRoot => "SquareRoot",
            Transform::Product => "Product",
            Transform::ZScore => "ZScore",
            Transform::MinMaxNorm => "MinMaxNorm",
            Transform::TimeBinning => "TimeBinning",
            Transform::GroupByAggregation(_) => "GroupByAggregation",
            Transform::TemporalWindowAggregate { .. } => "TemporalWindowAggregate",
            Transform::KTermFrequency => "KTermFrequency",
            Transform::Sum => "Sum",
            Transform::Difference => "Difference",
            Transform::Division => "Division",
            Transform::Sigmoid => "Sigmoid",
            Transform::BinningU { .. } => "BinningU",
            Transform::BinningD { .. } => "BinningD",
            Transform::NominalExpansion { .. } => "NominalExpansion",
            Transform::Sin => "Sin",
            Transform::Cos => "Cos",
            Transform::TanH => "TanH",
            Transform::FeatureSelection { .. } => "FeatureSelection",
        }
    }

    pub fn arity(&self) -> Arity {
        match self {
            Transform::Product | Transform::Sum | Transform::Difference | Transform::Division => {
                Arity::Binary
            }
            Transform::GroupByAggregation(_) => Arity::GroupBy,
            Transform::FeatureSelection { .. } => Arity::Selection,
            _ => Arity::Unary,
        }
    }

    /// Accepted dtypes per argument. Selection takes the whole feature set.
    pub fn input_dtypes(&self) -> Vec<Vec<DType>> {
        use DType::*;
        match self {
            Transform::TimeBinning => vec![vec![Datetime]],
            Transform::KTermFrequency => vec![vec![Categorical, Text]],
            Transform::NominalExpansion { .. } => vec![vec![Categorical]],
            Transform::GroupByAggregation(_) => vec![vec![Numeric], vec![Categorical]],
            Transform::FeatureSelection { .. } => vec![vec![Numeric, Categorical, Datetime, Text]],
            t if t.arity() == Arity::Binary => vec![vec![Numeric], vec![Numeric]],
            _ => vec![vec![Numeric]],
        }
    }

    pub fn is_selection(&self) -> bool {
        matches!(self, Transform::FeatureSelection { .. })
    }

    /// Name plus parameters; feeds the catalog fingerprint.
    pub fn descriptor(&self) -> String {
        match self {
            Transform::GroupByAggregation(aggs) => format!(
                "GroupByAggregation[{}]",
                aggs.iter().map(|a| a.short()).collect::<Vec<_>>().join(",")
            ),
            Transform::TemporalWindowAggregate { window } => {
                format!("TemporalWindowAggregate[window={window}]")
            }
            Transform::BinningU { bins } => format!("BinningU[bins={bins}]"),
            Transform::BinningD { bins } => format!("BinningD[bins={bins}]"),
            Transform::NominalExpansion { max_cardinality } => {
                format!("NominalExpansion[max_cardinality={max_cardinality}]")
            }
            Transform::FeatureSelection { fraction } => {
                format!("FeatureSelection[fraction={fraction}]")
            }
            other => other.name().to_string(),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered transform list. Positions are the action identifiers used by
/// learned policies, so the order is part of a policy's identity.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformCatalog {
    transforms: Vec<Transform>,
}

impl Default for TransformCatalog {
    fn default() -> Self {
        TransformCatalog {
            transforms: CATALOG_NAMES
                .iter()
                .map(|n| Transform::from_name(n).unwrap())
                .collect(),
        }
    }
}

impl TransformCatalog {
    pub fn new(transforms: Vec<Transform>) -> Self {
        TransformCatalog { transforms }
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, TransformError> {
        let mut seen = HashSet::new();
        let mut transforms = Vec::with_capacity(names.len());
        for n in names {
            let t = Transform::from_name(n.as_ref().trim())?;
            if seen.insert(t.name()) {
                transforms.push(t);
            }
        }
        Ok(TransformCatalog { transforms })
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Transform> {
        self.transforms.get(index)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.transforms.iter().position(|t| t.name() == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.transforms.iter().map(Transform::name).collect()
    }

    /// Hex digest over the ordered transform descriptors.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.transforms {
            h.update(t.descriptor().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

fn numeric(col: &FeatureColumn) -> Option<&[f64]> {
    col.values().as_numeric()
}

fn present(values: &[f64]) -> impl Iterator<Item = f64> + '_ {
    values.iter().copied().filter(|x| !x.is_nan())
}

fn has_present(values: &[f64]) -> bool {
    values.iter().any(|x| !x.is_nan())
}

fn is_constant(values: &[f64]) -> bool {
    let mut it = present(values);
    match it.next() {
        None => true,
        Some(first) => it.all(|x| x == first),
    }
}

fn labels_distinct(values: &[Option<String>]) -> usize {
    values.iter().flatten().collect::<HashSet<_>>().len()
}

/// Validity filter for unary transforms.
fn unary_accepts(t: &Transform, col: &FeatureColumn, d: &Dataset) -> bool {
    match t {
        Transform::TimeBinning => col
            .values()
            .as_datetime()
            .is_some_and(|v| v.iter().any(Option::is_some)),
        Transform::KTermFrequency => col
            .values()
            .as_labels()
            .is_some_and(|v| v.iter().any(Option::is_some)),
        Transform::NominalExpansion { max_cardinality } => match col.values() {
            ColumnValues::Categorical(v) => {
                let k = labels_distinct(v);
                (2..=*max_cardinality).contains(&k)
            }
            _ => false,
        },
        _ => {
            let Some(v) = numeric(col) else {
                return false;
            };
            if !has_present(v) {
                return false;
            }
            match t {
                Transform::Log => present(v).all(|x| x > 0.0),
                Transform::SquareRoot => present(v).all(|x| x >= 0.0),
                Transform::ZScore
                | Transform::MinMaxNorm
                | Transform::BinningU { .. }
                | Transform::BinningD { .. } => !is_constant(v),
                Transform::TemporalWindowAggregate { .. } => d.has_dtype(DType::Datetime),
                _ => true,
            }
        }
    }
}

/// Every input tuple (feature indices into `d`) the transform would consume.
pub fn applicable_inputs(t: &Transform, d: &Dataset) -> Vec<Vec<usize>> {
    let feats = d.features();
    let numeric_idx: Vec<usize> = (0..feats.len())
        .filter(|&i| numeric(&feats[i]).is_some_and(has_present))
        .collect();
    match t.arity() {
        Arity::Selection => {
            if feats.len() >= 2 {
                vec![(0..feats.len()).collect()]
            } else {
                Vec::new()
            }
        }
        Arity::Unary => (0..feats.len())
            .filter(|&i| unary_accepts(t, &feats[i], d))
            .map(|i| vec![i])
            .collect(),
        Arity::Binary => {
            let mut out = Vec::new();
            for (a, &i) in numeric_idx.iter().enumerate() {
                for &j in &numeric_idx[a + 1..] {
                    match t {
                        Transform::Division => {
                            let vi = numeric(&feats[i]).unwrap();
                            let vj = numeric(&feats[j]).unwrap();
                            if present(vj).all(|x| x != 0.0) {
                                out.push(vec![i, j]);
                            }
                            if present(vi).all(|x| x != 0.0) {
                                out.push(vec![j, i]);
                            }
                        }
                        _ => out.push(vec![i, j]),
                    }
                }
            }
            out
        }
        Arity::GroupBy => {
            let keys: Vec<usize> = (0..feats.len())
                .filter(|&i| {
                    matches!(feats[i].values(), ColumnValues::Categorical(v) if v.iter().any(Option::is_some))
                })
                .collect();
            let mut out = Vec::new();
            for &v in &numeric_idx {
                for &k in &keys {
                    out.push(vec![v, k]);
                }
            }
            out
        }
    }
}

fn map_numeric(v: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    v.iter()
        .map(|&x| if x.is_nan() { f64::NAN } else { f(x) })
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = present(v).count() as f64;
    let mean = present(v).sum::<f64>() / n;
    let var = present(v).map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    present(v).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    })
}

/// Equal-frequency bin index per row; `None` for missing.
pub(crate) fn quantile_bins(v: &[f64], bins: usize) -> Vec<Option<u32>> {
    let mut sorted: Vec<f64> = present(v).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f64> = (1..bins)
        .map(|k| sorted[(k * n / bins).min(n - 1)])
        .collect();
    v.iter()
        .map(|&x| {
            if x.is_nan() {
                None
            } else {
                Some(cuts.partition_point(|&c| c <= x) as u32)
            }
        })
        .collect()
}

fn unary_lineage(op: &str, col: &FeatureColumn) -> Lineage {
    Lineage::derived(op, vec![col.lineage().clone()])
}

fn derive_unary(t: &Transform, col: &FeatureColumn, d: &Dataset) -> Vec<FeatureColumn> {
    let numeric_out = |op: &str, values: Vec<f64>| {
        vec![FeatureColumn::derived(
            unary_lineage(op, col),
            ColumnValues::Numeric(values),
        )]
    };
    match t {
        Transform::TimeBinning => {
            let v = col.values().as_datetime().unwrap();
            let field = |f: fn(i64) -> Option<u32>| -> Vec<f64> {
                v.iter()
                    .map(|t| t.and_then(f).map_or(f64::NAN, f64::from))
                    .collect()
            };
            vec![
                FeatureColumn::derived(
                    unary_lineage("hour", col),
                    ColumnValues::Numeric(field(calendar::hour)),
                ),
                FeatureColumn::derived(
                    unary_lineage("dayofweek", col),
                    ColumnValues::Numeric(field(calendar::day_of_week)),
                ),
                FeatureColumn::derived(
                    unary_lineage("month", col),
                    ColumnValues::Numeric(field(calendar::month)),
                ),
            ]
        }
        Transform::KTermFrequency => {
            let v = col.values().as_labels().unwrap();
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for s in v.iter().flatten() {
                *counts.entry(s.as_str()).or_default() += 1;
            }
            let out = v
                .iter()
                .map(|s| s.as_ref().map_or(f64::NAN, |s| counts[s.as_str()] as f64))
                .collect();
            numeric_out("freq", out)
        }
        Transform::NominalExpansion { .. } => {
            let v = col.values().as_labels().unwrap();
            let levels: Vec<&String> = v
                .iter()
                .flatten()
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let mut used_ops = HashSet::new();
            levels
                .into_iter()
                .map(|level| {
                    let clean: String = level
                        .chars()
                        .map(|c| {
                            if c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.') {
                                c
                            } else {
                                '_'
                            }
                        })
                        .collect();
                    let mut op = format!("onehot_{clean}");
                    let mut k = 2;
                    while !used_ops.insert(op.clone()) {
                        op = format!("onehot_{clean}_{k}");
                        k += 1;
                    }
                    let values = v
                        .iter()
                        .map(|s| match s {
                            None => f64::NAN,
                            Some(s) if s == level => 1.0,
                            Some(_) => 0.0,
                        })
                        .collect();
                    FeatureColumn::derived(unary_lineage(&op, col), ColumnValues::Numeric(values))
                })
                .collect()
        }
        Transform::TemporalWindowAggregate { window } => {
            let v = numeric(col).unwrap();
            let time = d
                .features()
                .iter()
                .find_map(|f| f.values().as_datetime())
                .expect("checked by the validity filter");
            let mut order: Vec<usize> = (0..v.len()).collect();
            order.sort_by_key(|&r| (time[r].is_none(), time[r].unwrap_or(0)));
            let mut out = vec![f64::NAN; v.len()];
            for (pos, &row) in order.iter().enumerate() {
                let start = (pos + 1).saturating_sub(*window);
                let (sum, n) = order[start..=pos]
                    .iter()
                    .map(|&r| v[r])
                    .filter(|x| !x.is_nan())
                    .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
                if n > 0 {
                    out[row] = sum / n as f64;
                }
            }
            numeric_out(&format!("rollmean{window}"), out)
        }
        _ => {
            let v = numeric(col).unwrap();
            match t {
                Transform::Log => numeric_out("log", map_numeric(v, f64::ln)),
                Transform::Square => numeric_out("square", map_numeric(v, |x| x * x)),
                Transform::SquareRoot => numeric_out("sqrt", map_numeric(v, f64::sqrt)),
                Transform::Sigmoid => {
                    numeric_out("sigmoid", map_numeric(v, |x| 1.0 / (1.0 + (-x).exp())))
                }
                Transform::Sin => numeric_out("sin", map_numeric(v, f64::sin)),
                Transform::Cos => numeric_out("cos", map_numeric(v, f64::cos)),
                Transform::TanH => numeric_out("tanh", map_numeric(v, f64::tanh)),
                Transform::ZScore => {
                    let (mean, std) = mean_std(v);
                    numeric_out("zscore", map_numeric(v, |x| (x - mean) / std))
                }
                Transform::MinMaxNorm => {
                    let (lo, hi) = min_max(v);
                    numeric_out("minmax", map_numeric(v, |x| (x - lo) / (hi - lo)))
                }
                Transform::BinningU { bins } => {
                    let (lo, hi) = min_max(v);
                    let b = *bins as f64;
                    numeric_out(
                        "binu",
                        map_numeric(v, |x| ((x - lo) / (hi - lo) * b).floor().min(b - 1.0)),
                    )
                }
                Transform::BinningD { bins } => {
                    let out = quantile_bins(v, *bins)
                        .into_iter()
                        .map(|b| b.map_or(f64::NAN, f64::from))
                        .collect();
                    numeric_out("bind", out)
                }
                _ => unreachable!("not a unary numeric transform: {t}"),
            }
        }
    }
}

fn derive_binary(t: &Transform, a: &FeatureColumn, b: &FeatureColumn) -> FeatureColumn {
    let va = numeric(a).unwrap();
    let vb = numeric(b).unwrap();
    let (op, f): (&str, fn(f64, f64) -> f64) = match t {
        Transform::Product => ("product", |x, y| x * y),
        Transform::Sum => ("sum", |x, y| x + y),
        Transform::Difference => ("diff", |x, y| x - y),
        Transform::Division => ("div", |x, y| x / y),
        _ => unreachable!("not a binary transform: {t}"),
    };
    let values = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
    FeatureColumn::derived(
        Lineage::derived(op, vec![a.lineage().clone(), b.lineage().clone()]),
        ColumnValues::Numeric(values),
    )
}

fn derive_group(
    aggs: &[Aggregate],
    value: &FeatureColumn,
    key: &FeatureColumn,
) -> Vec<FeatureColumn> {
    let v = numeric(value).unwrap();
    let k = key.values().as_labels().unwrap();
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (x, key) in v.iter().zip(k) {
        if let Some(key) = key {
            let g = groups.entry(key.as_str()).or_default();
            if !x.is_nan() {
                g.push(*x);
            }
        }
    }
    aggs.iter()
        .map(|agg| {
            let stat: HashMap<&str, f64> = groups
                .iter()
                .map(|(&key, xs)| {
                    let s = if xs.is_empty() {
                        if *agg == Aggregate::Count {
                            0.0
                        } else {
                            f64::NAN
                        }
                    } else {
                        match agg {
                            Aggregate::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
                            Aggregate::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                            Aggregate::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
                            Aggregate::Count => xs.len() as f64,
                            Aggregate::Std => mean_std(xs).1,
                        }
                    };
                    (key, s)
                })
                .collect();
            let values = k
                .iter()
                .map(|key| key.as_ref().map_or(f64::NAN, |key| stat[key.as_str()]))
                .collect();
            FeatureColumn::derived(
                Lineage::derived(
                    agg.op(),
                    vec![value.lineage().clone(), key.lineage().clone()],
                ),
                ColumnValues::Numeric(values),
            )
        })
        .collect()
}

fn produces_non_finite(out: &FeatureColumn) -> bool {
    out.values()
        .as_numeric()
        .is_some_and(|v| v.iter().any(|x| x.is_infinite()))
}

fn is_constant_column(out: &FeatureColumn) -> bool {
    match out.values() {
        ColumnValues::Numeric(v) => is_constant(v),
        ColumnValues::Categorical(v) | ColumnValues::Text(v) => labels_distinct(v) <= 1,
        ColumnValues::Datetime(v) => v.iter().flatten().collect::<HashSet<_>>().len() <= 1,
    }
}

/// Derived columns for one input tuple from [`applicable_inputs`], before
/// any filtering. Some unary transforms emit several columns per input.
pub fn derive_for_tuple(t: &Transform, d: &Dataset, tuple: &[usize]) -> Vec<FeatureColumn> {
    let feats = d.features();
    match t.arity() {
        Arity::Unary => derive_unary(t, &feats[tuple[0]], d),
        Arity::Binary => vec![derive_binary(t, &feats[tuple[0]], &feats[tuple[1]])],
        Arity::GroupBy => match t {
            Transform::GroupByAggregation(aggs) => {
                derive_group(aggs, &feats[tuple[0]], &feats[tuple[1]])
            }
            _ => unreachable!("only group-by aggregation has group-by arity"),
        },
        Arity::Selection => Vec::new(),
    }
}

/// Whether a derived column is worth keeping next to `d`'s features: finite,
/// non-constant, and new by both name and values.
pub fn is_informative_addition(col: &FeatureColumn, d: &Dataset) -> bool {
    !(produces_non_finite(col)
        || is_constant_column(col)
        || d.feature(col.name()).is_some()
        || d.features()
            .iter()
            .any(|f| f.value_digest() == col.value_digest()))
}

/// Applies `t` to every valid input tuple of `d` and appends the derived
/// features. Derived columns that are constant, non-finite, already present
/// by name, or identical in values to an existing column are dropped.
/// `seed` drives the pair subsample when a binary transform exceeds
/// [`MAX_BINARY_PAIRS`].
pub fn apply_transform(t: &Transform, d: &Dataset, seed: u64) -> Result<Dataset, TransformError> {
    if t.is_selection() {
        return Err(TransformError::SelectionNotApplicable);
    }
    let mut tuples = applicable_inputs(t, d);
    if tuples.is_empty() {
        return Err(TransformError::NothingApplicable(t.name().to_string()));
    }
    if t.arity() == Arity::Binary && tuples.len() > MAX_BINARY_PAIRS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = index::sample(&mut rng, tuples.len(), MAX_BINARY_PAIRS).into_vec();
        keep.sort_unstable();
        tuples = keep.into_iter().map(|i| tuples[i].clone()).collect();
    }

    let feats = d.features();
    let mut names: HashSet<String> = feats.iter().map(|f| f.name().to_string()).collect();
    let mut digests: HashSet<[u8; 32]> = feats.iter().map(|f| *f.value_digest()).collect();
    let mut out: Vec<Arc<FeatureColumn>> = feats.to_vec();
    let before = out.len();

    for tuple in &tuples {
        for col in derive_for_tuple(t, d, tuple) {
            if names.contains(col.name())
                || produces_non_finite(&col)
                || is_constant_column(&col)
                || digests.contains(col.value_digest())
            {
                continue;
            }
            names.insert(col.name().to_string());
            digests.insert(*col.value_digest());
            out.push(Arc::new(col));
        }
    }
    if out.len() == before {
        return Err(TransformError::NothingApplicable(t.name().to_string()));
    }
    Ok(d.with_features(out)?)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Discrete codes used by the classification filter score. Missing values
/// form their own code.
fn discretize(col: &FeatureColumn) -> Vec<u32> {
    match col.values() {
        ColumnValues::Numeric(v) => quantile_bins(v, DEFAULT_BINS)
            .into_iter()
            .map(|b| b.map_or(u32::MAX, |b| b))
            .collect(),
        ColumnValues::Datetime(v) => {
            let as_f: Vec<f64> = v.iter().map(|t| t.map_or(f64::NAN, |t| t as f64)).collect();
            quantile_bins(&as_f, DEFAULT_BINS)
                .into_iter()
                .map(|b| b.map_or(u32::MAX, |b| b))
                .collect()
        }
        ColumnValues::Categorical(v) | ColumnValues::Text(v) => {
            let mut ids: HashMap<&str, u32> = HashMap::new();
            v.iter()
                .map(|s| match s {
                    None => u32::MAX,
                    Some(s) => {
                        let next = ids.len() as u32;
                        *ids.entry(s.as_str()).or_insert(next)
                    }
                })
                .collect()
        }
    }
}

/// Mutual information (nats) between two discrete code vectors.
pub fn mutual_information(x: &[u32], y: &[u32]) -> f64 {
    let n = x.len() as f64;
    let mut joint: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut px: BTreeMap<u32, usize> = BTreeMap::new();
    let mut py: BTreeMap<u32, usize> = BTreeMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *joint.entry((a, b)).or_default() += 1;
        *px.entry(a).or_default() += 1;
        *py.entry(b).or_default() += 1;
    }
    let mi = entropy(px.values().copied(), n) + entropy(py.values().copied(), n)
        - entropy(joint.values().copied(), n);
    mi.max(0.0)
}

fn abs_pearson(x: &[f64], y: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, _)| !a.is_nan())
        .map(|(&a, &b)| (a, b))
        .collect();
    let n = pairs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).abs()
}

/// Correlation ratio of a real target over the groups of a discrete feature.
fn correlation_ratio(codes: &[u32], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let total: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut groups: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (&c, &v) in codes.iter().zip(y) {
        let g = groups.entry(c).or_default();
        g.0 += v;
        g.1 += 1;
    }
    let between: f64 = groups
        .values()
        .map(|&(s, k)| {
            let m = s / k as f64;
            k as f64 * (m - mean) * (m - mean)
        })
        .sum();
    (between / total).sqrt()
}

/// Filter score of every feature: mutual information with the class for
/// classification, |Pearson r| (or the correlation ratio for non-numeric
/// columns) for regression.
pub fn filter_scores(d: &Dataset) -> Vec<f64> {
    match d.target().values() {
        TargetValues::Classes { codes, .. } => d
            .features()
            .iter()
            .map(|f| mutual_information(&discretize(f), codes))
            .collect(),
        TargetValues::Real(y) => d
            .features()
            .iter()
            .map(|f| match f.values() {
                ColumnValues::Numeric(v) => abs_pearson(v, y),
                ColumnValues::Datetime(v) => {
                    let as_f: Vec<f64> =
                        v.iter().map(|t| t.map_or(f64::NAN, |t| t as f64)).collect();
                    abs_pearson(&as_f, y)
                }
                _ => correlation_ratio(&discretize(f), y),
            })
            .collect(),
    }
}

/// Keeps the top ⌈fraction·m⌉ features by filter score (ties by canonical
/// lineage), preserving their original order.
pub fn select_features(d: &Dataset, fraction: f64) -> Result<Dataset, TransformError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(TransformError::InvalidFraction(fraction));
    }
    let m = d.feature_count();
    if m < 2 {
        return Err(TransformError::TooFewFeatures(m));
    }
    let keep = ((fraction * m as f64).ceil() as usize).clamp(1, m);
    let scores = filter_scores(d);
    let feats = d.features();
    let mut ranked: Vec<usize> = (0..m).collect();
    ranked.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| feats[a].name().cmp(feats[b].name()))
    });
    let mut chosen: Vec<usize> = ranked[..keep].to_vec();
    chosen.sort_unstable();
    Ok(d.with_features(chosen.into_iter().map(|i| feats[i].clone()).collect())?)
}

/// True when `t` applied to `d` would do anything at all (selection counts
/// when it can remove at least one feature).
pub fn is_applicable(t: &Transform, d: &Dataset) -> bool {
    match t {
        Transform::FeatureSelection { fraction } => {
            let m = d.feature_count();
            m >= 2 && ((fraction * m as f64).ceil() as usize) < m
        }
        _ => !applicable_inputs(t, d).is_empty(),
    }
}

/// Applies any catalog entry, routing selection to [`select_features`].
pub fn apply_any(t: &Transform, d: &Dataset, seed: u64) -> Result<Dataset, TransformError> {
    match t {
        Transform::FeatureSelection { fraction } => {
            if !is_applicable(t, d) {
                return Err(TransformError::NothingApplicable(t.name().to_string()));
            }
            select_features(d, *fraction)
        }
        _ => apply_transform(t, d, seed),
    }
}
