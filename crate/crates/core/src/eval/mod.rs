//! The accuracy oracle: k-fold cross-validation of a configurable learner,
//! scored with macro F1 (classification) or 1 − RAE (regression), behind a
//! signature-keyed cache.

mod linear;
mod metrics;
mod tree;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use rand::seq::{index, SliceRandom};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ColumnValues, Dataset, Signature, TargetValues, TaskKind};
use crate::seeds;

pub use linear::LinearModel;
pub use metrics::{score_classification, score_regression};
pub use tree::{DecisionTree, Labels, MaxFeatures, TreeParams};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{rows} rows cannot be split into {folds} folds")]
    TooFewRows { rows: usize, folds: usize },
    #[error("target is degenerate: {0}")]
    DegenerateTarget(String),
    #[error("prediction/actual length mismatch ({predictions} vs {actuals})")]
    LengthMismatch { predictions: usize, actuals: usize },
    #[error("actual values are all identical")]
    ConstantActuals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    DecisionTree,
    RandomForest,
    LinearLeastSquares,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::DecisionTree => "decision_tree",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::LinearLeastSquares => "linear_least_squares",
        }
    }

    pub fn parse(s: &str) -> Option<LearnerKind> {
        match s {
            "decision_tree" => Some(LearnerKind::DecisionTree),
            "random_forest" => Some(LearnerKind::RandomForest),
            "linear_least_squares" => Some(LearnerKind::LinearLeastSquares),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub kind: LearnerKind,
    pub max_depth: Option<usize>,
    pub trees: usize,
    /// Fraction of training rows drawn (without replacement) per tree.
    pub subsample: f64,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Learner {
    pub fn decision_tree(seed: u64) -> Learner {
        Learner {
            kind: LearnerKind::DecisionTree,
            max_depth: None,
            trees: 1,
            subsample: 1.0,
            max_features: MaxFeatures::All,
            seed,
        }
    }

    /// 20 unpruned trees, 0.8 row subsample, √m features per split.
    pub fn random_forest(seed: u64) -> Learner {
        Learner {
            kind: LearnerKind::RandomForest,
            max_depth: None,
            trees: 20,
            subsample: 0.8,
            max_features: MaxFeatures::Sqrt,
            seed,
        }
    }

    pub fn linear_least_squares(seed: u64) -> Learner {
        Learner {
            kind: LearnerKind::LinearLeastSquares,
            max_depth: None,
            trees: 0,
            subsample: 1.0,
            max_features: MaxFeatures::All,
            seed,
        }
    }

    pub fn of_kind(kind: LearnerKind, seed: u64) -> Learner {
        match kind {
            LearnerKind::DecisionTree => Learner::decision_tree(seed),
            LearnerKind::RandomForest => Learner::random_forest(seed),
            LearnerKind::LinearLeastSquares => Learner::linear_least_squares(seed),
        }
    }

    /// Identity of the configuration, excluding the seed.
    pub fn id(&self) -> String {
        match self.kind {
            LearnerKind::LinearLeastSquares => self.kind.as_str().to_string(),
            _ => format!(
                "{}(depth={},trees={},subsample={},features={:?})",
                self.kind.as_str(),
                self.max_depth.map_or("none".to_string(), |d| d.to_string()),
                self.trees,
                self.subsample,
                self.max_features
            ),
        }
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            max_features: self.max_features,
            min_samples_split: 2,
        }
    }

    /// Trains on `train` rows and predicts `test` rows. Predictions are class
    /// codes (as f64) for classification.
    pub fn fit_predict(
        &self,
        x: &FeatureMatrix,
        target: &TargetValues,
        train: &[usize],
        test: &[usize],
        seed: u64,
    ) -> Vec<f64> {
        let cols = &x.columns;
        match self.kind {
            LearnerKind::LinearLeastSquares => match target {
                TargetValues::Real(y) => {
                    let m = LinearModel::fit(cols, std::slice::from_ref(y), train);
                    test.iter().map(|&r| m.predict_row(cols, r)[0]).collect()
                }
                TargetValues::Classes { codes, labels } => {
                    let indicators: Vec<Vec<f64>> = (0..labels.len())
                        .map(|c| codes.iter().map(|&k| f64::from(k as usize == c)).collect())
                        .collect();
                    let m = LinearModel::fit(cols, &indicators, train);
                    test.iter()
                        .map(|&r| argmax(&m.predict_row(cols, r)) as f64)
                        .collect()
                }
            },
            LearnerKind::DecisionTree | LearnerKind::RandomForest => {
                let n_trees = if self.kind == LearnerKind::DecisionTree {
                    1
                } else {
                    self.trees.max(1)
                };
                let labels = match target {
                    TargetValues::Classes { codes, labels } => Labels::Classes {
                        codes,
                        n_classes: labels.len(),
                    },
                    TargetValues::Real(y) => Labels::Real(y),
                };
                let params = self.tree_params();
                let mut master = ChaCha8Rng::seed_from_u64(seed);
                let trees: Vec<DecisionTree> = (0..n_trees)
                    .map(|_| {
                        let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
                        let rows: Vec<usize> = if self.subsample >= 1.0 {
                            train.to_vec()
                        } else {
                            let k = ((self.subsample * train.len() as f64).round() as usize)
                                .clamp(1, train.len());
                            let mut picked = index::sample(&mut rng, train.len(), k).into_vec();
                            picked.sort_unstable();
                            picked.into_iter().map(|i| train[i]).collect()
                        };
                        DecisionTree::fit(cols, labels, &rows, &params, &mut rng)
                    })
                    .collect();
                match target {
                    TargetValues::Classes { labels, .. } => test
                        .iter()
                        .map(|&r| {
                            let mut votes = vec![0.0; labels.len()];
                            for t in &trees {
                                votes[t.predict_row(cols, r) as usize] += 1.0;
                            }
                            argmax(&votes) as f64
                        })
                        .collect(),
                    TargetValues::Real(_) => test
                        .iter()
                        .map(|&r| {
                            trees.iter().map(|t| t.predict_row(cols, r)).sum::<f64>()
                                / trees.len() as f64
                        })
                        .collect(),
                }
            }
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} seed={}", self.id(), self.seed)
    }
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Dense, complete, column-major view of a dataset's features, with columns
/// in canonical lineage order. Missing numeric/datetime cells take the column
/// mean; missing categorical cells take the mode. Categories are coded by
/// sorted level order.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_dataset(d: &Dataset) -> FeatureMatrix {
        let mut feats: Vec<_> = d.features().iter().collect();
        feats.sort_by(|a, b| a.name().cmp(b.name()));
        let names = feats.iter().map(|f| f.name().to_string()).collect();
        let columns = feats
            .iter()
            .map(|f| match f.values() {
                ColumnValues::Numeric(v) => impute_mean(v.clone()),
                ColumnValues::Datetime(v) => {
                    impute_mean(v.iter().map(|t| t.map_or(f64::NAN, |t| t as f64)).collect())
                }
                ColumnValues::Categorical(v) | ColumnValues::Text(v) => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for s in v.iter().flatten() {
                        *counts.entry(s.as_str()).or_default() += 1;
                    }
                    let codes: HashMap<&str, f64> = counts
                        .keys()
                        .enumerate()
                        .map(|(i, &k)| (k, i as f64))
                        .collect();
                    let mode = counts
                        .iter()
                        .fold(None::<(&str, usize)>, |acc, (&k, &c)| match acc {
                            Some((_, best)) if best >= c => acc,
                            _ => Some((k, c)),
                        })
                        .map_or(0.0, |(k, _)| codes[k]);
                    v.iter()
                        .map(|s| s.as_ref().map_or(mode, |s| codes[s.as_str()]))
                        .collect()
                }
            })
            .collect();
        FeatureMatrix { names, columns }
    }
}

fn impute_mean(mut v: Vec<f64>) -> Vec<f64> {
    let (sum, n) = v
        .iter()
        .filter(|x| !x.is_nan())
        .fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
    let mean = if n == 0 { 0.0 } else { sum / n as f64 };
    for x in v.iter_mut().filter(|x| x.is_nan()) {
        *x = mean;
    }
    v
}

/// Fold index per row. Classification: seeded shuffle, then round-robin
/// within each class (one counter carried across classes). Regression:
/// seeded shuffle cut into contiguous blocks.
pub fn fold_assignment(target: &TargetValues, folds: usize, seed: u64) -> Vec<usize> {
    let n = match target {
        TargetValues::Classes { codes, .. } => codes.len(),
        TargetValues::Real(v) => v.len(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    match target {
        TargetValues::Classes { codes, labels } => {
            let mut counter = 0;
            for c in 0..labels.len() as u32 {
                for &r in order.iter().filter(|&&r| codes[r] == c) {
                    assignment[r] = counter % folds;
                    counter += 1;
                }
            }
        }
        TargetValues::Real(_) => {
            for (pos, &r) in order.iter().enumerate() {
                assignment[r] = pos * folds / n;
            }
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub score: f64,
    pub fold_scores: Vec<f64>,
    pub folds: usize,
}

fn check_target(d: &Dataset) -> Result<(), EvalError> {
    match d.target().values() {
        TargetValues::Classes { labels, .. } if labels.len() < 2 => Err(
            EvalError::DegenerateTarget("classification target has a single class".into()),
        ),
        TargetValues::Real(v) if v.iter().all(|&x| x == v[0]) => Err(EvalError::DegenerateTarget(
            "regression target is constant".into(),
        )),
        _ => Ok(()),
    }
}

/// k-fold cross-validation (uncached). Folds are trained in parallel on the
/// current rayon pool; results do not depend on the pool size.
pub fn cross_validate(
    d: &Dataset,
    learner: &Learner,
    folds: usize,
) -> Result<EvalResult, EvalError> {
    let rows = d.row_count();
    if folds < 2 || rows < folds {
        return Err(EvalError::TooFewRows { rows, folds });
    }
    check_target(d)?;
    let target = d.target().values();
    let x = FeatureMatrix::from_dataset(d);
    let assignment = fold_assignment(target, folds, seeds::derive(learner.seed, "folds"));
    let fold_scores = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..rows).partition(|&r| assignment[r] == k);
            let seed = seeds::derive_indexed(learner.seed, "fold-model", k as u64);
            let pred = learner.fit_predict(&x, target, &train, &test, seed);
            match target {
                TargetValues::Classes { codes, .. } => {
                    let actual: Vec<u32> = test.iter().map(|&r| codes[r]).collect();
                    let pred: Vec<u32> = pred.iter().map(|&p| p as u32).collect();
                    score_classification(&pred, &actual)
                }
                TargetValues::Real(y) => {
                    let actual: Vec<f64> = test.iter().map(|&r| y[r]).collect();
                    match score_regression(&pred, &actual) {
                        // a held-out fold with one repeated value: exact or nothing
                        Err(EvalError::ConstantActuals) => {
                            Ok(f64::from(pred.iter().zip(&actual).all(|(p, a)| p == a)))
                        }
                        other => other,
                    }
                }
            }
        })
        .collect::<Result<Vec<f64>, EvalError>>()?;
    let score = fold_scores.iter().sum::<f64>() / folds as f64;
    Ok(EvalResult {
        score,
        fold_scores,
        folds,
    })
}

pub fn metric_id(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Classification => "macro_f1",
        TaskKind::Regression => "one_minus_rae",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub signature: Signature,
    pub learner: String,
    pub metric: &'static str,
    pub folds: usize,
    pub seed: u64,
}

/// Evaluation results keyed by dataset content and evaluation settings.
#[derive(Debug, Default)]
pub struct ModelCache {
    entries: RwLock<HashMap<CacheKey, EvalResult>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ModelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<EvalResult> {
        let hit = self.entries.read().get(key).cloned();
        match hit {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        hit
    }

    pub fn insert(&self, key: CacheKey, result: EvalResult) {
        self.entries.write().entry(key).or_insert(result);
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
}

/// Scalar performance of a dataset, in [0, 1].
pub trait AccuracyOracle: Send + Sync {
    fn accuracy(&self, d: &Dataset) -> Result<f64, EvalError>;
}

/// Cached cross-validation with fixed learner and fold count.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub learner: Learner,
    pub folds: usize,
    cache: Arc<ModelCache>,
}

impl Evaluator {
    pub fn new(learner: Learner, folds: usize) -> Self {
        Self::with_cache(learner, folds, Arc::new(ModelCache::new()))
    }

    pub fn with_cache(learner: Learner, folds: usize, cache: Arc<ModelCache>) -> Self {
        Evaluator {
            learner,
            folds,
            cache,
        }
    }

    pub fn cache(&self) -> &Arc<ModelCache> {
        &self.cache
    }

    pub fn key(&self, d: &Dataset) -> CacheKey {
        CacheKey {
            signature: d.signature(),
            learner: self.learner.id(),
            metric: metric_id(d.task_kind()),
            folds: self.folds,
            seed: self.learner.seed,
        }
    }

    pub fn evaluate(&self, d: &Dataset) -> Result<EvalResult, EvalError> {
        let key = self.key(d);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let result = cross_validate(d, &self.learner, self.folds)?;
        self.cache.insert(key, result.clone());
        Ok(result)
    }
}

impl AccuracyOracle for Evaluator {
    fn accuracy(&self, d: &Dataset) -> Result<f64, EvalError> {
        self.evaluate(d).map(|r| r.score)
    }
}
