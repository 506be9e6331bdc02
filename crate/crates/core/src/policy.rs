//! Learned traversal policies: a 12-entry state featurization, a linear
//! Q-function (one weight vector per action, or one shared vector), the
//! Q-learning update, and the training loop over example datasets.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DType, Dataset};
use crate::eval::AccuracyOracle;
use crate::explore::{ExploreConfig, ExploreError, Explorer};
use crate::graph::TransformationGraph;
use crate::seeds;
use crate::transforms::TransformCatalog;

pub const FEATURE_DIM: usize = 12;
pub const FORMAT_VERSION: u32 = 1;
pub const PATH_COUNT_CAP: f64 = 5.0;
pub const FEATURE_RATIO_CAP: f64 = 10.0;
pub const DEFAULT_BUDGETS: [usize; 8] = [25, 50, 75, 100, 150, 200, 300, 500];
pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_EPSILON: f64 = 0.15;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("action slot {slot} is outside the policy's {slots} slots")]
    UnknownAction { slot: usize, slots: usize },
    #[error("policy was trained for catalog {expected}, current catalog is {actual}")]
    FingerprintMismatch { expected: String, actual: String },
    #[error("corrupt policy file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("no training datasets")]
    NoTrainingData,
    #[error(transparent)]
    Explore(#[from] Box<ExploreError>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Features of a candidate (node, transform) action in the current graph.
///
/// Layout: node accuracy; the transform's mean immediate reward so far;
/// uses of the transform on the root path (capped); the node's gain over its
/// parent and the parent's over the grandparent; depth / h_max; budget
/// fraction used; feature count relative to the root (capped); whether the
/// transform is the feature selector; and whether the node's dataset has
/// numeric, datetime, and string features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFeatures(pub [f64; FEATURE_DIM]);

impl StateFeatures {
    pub fn dot(&self, w: &[f64; FEATURE_DIM]) -> f64 {
        self.0.iter().zip(w).map(|(f, w)| f * w).sum()
    }
}

pub fn featurize(
    g: &TransformationGraph,
    node: usize,
    label: &str,
    is_selection: bool,
    b_ratio: f64,
) -> StateFeatures {
    let n = &g.theta()[node];
    let d: &Dataset = &n.dataset;
    let parent_gain = n.parents.first().map_or(0.0, |&p| g.gain(p));
    let depth = if g.h_max() == 0 {
        0.0
    } else {
        n.depth as f64 / g.h_max() as f64
    };
    let ratio = d.feature_count() as f64 / g.root().feature_count().max(1) as f64;
    let flag = |b: bool| f64::from(u8::from(b));
    StateFeatures([
        n.accuracy,
        g.average_reward(label),
        (g.path_count(node, label) as f64).min(PATH_COUNT_CAP),
        g.gain(node),
        parent_gain,
        depth,
        b_ratio,
        ratio.min(FEATURE_RATIO_CAP),
        flag(is_selection),
        flag(d.has_dtype(DType::Numeric)),
        flag(d.has_dtype(DType::Datetime)),
        flag(d.has_dtype(DType::Categorical) || d.has_dtype(DType::Text)),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVariant {
    /// One weight vector per action.
    Rl1,
    /// One weight vector shared by all actions.
    Rl2,
}

impl PolicyVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyVariant::Rl1 => "rl1",
            PolicyVariant::Rl2 => "rl2",
        }
    }
}

/// One observed step: features and weight slot of the taken action, its
/// immediate reward, and the features and slot of the best next action
/// (`None` at a terminal state).
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: StateFeatures,
    pub slot: usize,
    pub reward: f64,
    pub next: Option<(usize, StateFeatures)>,
}

/// Linear action-value function. Slots `0..catalog.len()` are the catalog
/// transforms in order; slot `catalog.len()` is the sum action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPolicy {
    pub format_version: u32,
    pub variant: PolicyVariant,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub episodes: usize,
    pub catalog: Vec<String>,
    pub fingerprint: String,
    pub weights: Vec<[f64; FEATURE_DIM]>,
}

impl QPolicy {
    /// All weights start at 1.
    pub fn new(variant: PolicyVariant, catalog: &TransformCatalog) -> QPolicy {
        let rows = match variant {
            PolicyVariant::Rl1 => catalog.len() + 1,
            PolicyVariant::Rl2 => 1,
        };
        QPolicy {
            format_version: FORMAT_VERSION,
            variant,
            gamma: DEFAULT_GAMMA,
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            episodes: 0,
            catalog: catalog.names().iter().map(|s| s.to_string()).collect(),
            fingerprint: catalog.fingerprint(),
            weights: vec![[1.0; FEATURE_DIM]; rows],
        }
    }

    /// Number of action slots (catalog transforms plus the sum action).
    pub fn slots(&self) -> usize {
        self.catalog.len() + 1
    }

    fn row(&self, slot: usize) -> Result<usize, PolicyError> {
        if slot >= self.slots() {
            return Err(PolicyError::UnknownAction {
                slot,
                slots: self.slots(),
            });
        }
        Ok(match self.variant {
            PolicyVariant::Rl1 => slot,
            PolicyVariant::Rl2 => 0,
        })
    }

    pub fn q_value(&self, f: &StateFeatures, slot: usize) -> Result<f64, PolicyError> {
        Ok(f.dot(&self.weights[self.row(slot)?]))
    }

    /// `w ← w + α (r + γ max Q(s′, ·) − Q(s, c)) f(s)` on the taken action's
    /// vector (or the shared vector).
    pub fn q_update(&mut self, tr: &Transition) -> Result<(), PolicyError> {
        let row = self.row(tr.slot)?;
        let future = match &tr.next {
            Some((slot, f)) => self.q_value(f, *slot)?,
            None => 0.0,
        };
        let delta = tr.reward + self.gamma * future - tr.features.dot(&self.weights[row]);
        let step = self.alpha * delta;
        for (w, f) in self.weights[row].iter_mut().zip(&tr.features.0) {
            *w += step * f;
        }
        Ok(())
    }

    /// Index into `candidates` of the chosen action: with probability
    /// `epsilon` a uniform pick, otherwise the first maximum of Q.
    /// Candidates are expected in tie-break order.
    pub fn select_action<R: Rng>(
        &self,
        candidates: &[(usize, StateFeatures)],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Option<usize>, PolicyError> {
        if candidates.is_empty() {
            return Ok(None);
        }
        if epsilon > 0.0 && rng.gen_bool(epsilon.min(1.0)) {
            return Ok(Some(rng.gen_range(0..candidates.len())));
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (slot, f)) in candidates.iter().enumerate() {
            let q = self.q_value(f, *slot)?;
            if q > best.1 {
                best = (i, q);
            }
        }
        Ok(Some(best.0))
    }

    pub fn check_catalog(&self, catalog: &TransformCatalog) -> Result<(), PolicyError> {
        let actual = catalog.fingerprint();
        if self.fingerprint != actual {
            return Err(PolicyError::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                actual,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("policy serializes");
        s.push('\n');
        s
    }
}

pub fn save_policy(p: &QPolicy, path: &Path) -> Result<(), PolicyError> {
    fs::write(path, p.to_json())?;
    Ok(())
}

/// Reads a policy file and checks it against `catalog`.
pub fn load_policy(path: &Path, catalog: &TransformCatalog) -> Result<QPolicy, PolicyError> {
    let text = fs::read_to_string(path)?;
    let corrupt = |reason: String| PolicyError::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    let p: QPolicy = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    if p.format_version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {}",
            p.format_version
        )));
    }
    let rows = match p.variant {
        PolicyVariant::Rl1 => p.catalog.len() + 1,
        PolicyVariant::Rl2 => 1,
    };
    if p.weights.len() != rows {
        return Err(corrupt(format!(
            "expected {rows} weight rows, found {}",
            p.weights.len()
        )));
    }
    if p.weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(corrupt("non-finite weight".into()));
    }
    p.check_catalog(catalog)?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: PolicyVariant,
    pub budgets: Vec<usize>,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub h_max: usize,
    pub sum_actions: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(variant: PolicyVariant, seed: u64) -> Self {
        TrainConfig {
            variant,
            budgets: DEFAULT_BUDGETS.to_vec(),
            gamma: DEFAULT_GAMMA,
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            h_max: crate::graph::DEFAULT_H_MAX,
            sum_actions: true,
            seed,
        }
    }
}

/// Runs one ε-greedy exploration episode per (dataset, budget) pair, in a
/// seeded random order, updating the policy after every step.
pub fn train_policy(
    datasets: &[Dataset],
    catalog: &TransformCatalog,
    config: &TrainConfig,
    oracle: Arc<dyn AccuracyOracle>,
) -> Result<QPolicy, PolicyError> {
    if datasets.is_empty() {
        return Err(PolicyError::NoTrainingData);
    }
    let mut policy = QPolicy::new(config.variant, catalog);
    policy.gamma = config.gamma;
    policy.alpha = config.alpha;
    policy.epsilon = config.epsilon;
    policy.seed = config.seed;

    let mut episodes: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|d| config.budgets.iter().map(move |&b| (d, b)))
        .collect();
    episodes.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds::derive(
        config.seed,
        "episodes",
    )));

    for (k, &(d, budget)) in episodes.iter().enumerate() {
        let episode_seed = seeds::derive_indexed(config.seed, "episode", k as u64);
        run_episode(
            &mut policy,
            &datasets[d],
            catalog,
            config,
            budget,
            episode_seed,
            &oracle,
        )
        .map_err(Box::new)?;
        policy.episodes += 1;
    }
    Ok(policy)
}

fn run_episode(
    policy: &mut QPolicy,
    d0: &Dataset,
    catalog: &TransformCatalog,
    config: &TrainConfig,
    budget: usize,
    seed: u64,
    oracle: &Arc<dyn AccuracyOracle>,
) -> Result<(), ExploreError> {
    let explore_config = ExploreConfig {
        budget,
        h_max: config.h_max,
        sum_actions: config.sum_actions,
        seed,
    };
    let mut ex = Explorer::new(d0.clone(), catalog, &explore_config, Arc::clone(oracle))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "epsilon"));
    while ex.steps_used() < budget {
        let candidates = ex.featurized_actions();
        let pairs: Vec<(usize, StateFeatures)> = candidates
            .iter()
            .map(|(a, f)| (a.slot(catalog), *f))
            .collect();
        let Some(pick) = policy.select_action(&pairs, config.epsilon, &mut rng)? else {
            break;
        };
        let (action, features) = &candidates[pick];
        let Some(step) = ex.apply(action)? else {
            continue;
        };
        let next = if ex.steps_used() >= budget {
            None
        } else {
            let next_pairs: Vec<(usize, StateFeatures)> = ex
                .featurized_actions()
                .into_iter()
                .map(|(a, f)| (a.slot(catalog), f))
                .collect();
            policy
                .select_action(&next_pairs, 0.0, &mut rng)?
                .map(|i| next_pairs[i])
        };
        policy.q_update(&Transition {
            features: *features,
            slot: action.slot(catalog),
            reward: step.reward(),
            next,
        })?;
    }
    Ok(())
}
