//! Budgeted graph exploration and the non-graph baselines.
//!
//! Each step scores every legal action with the strategy's reward estimate
//! and applies the best one; ties go to the lower node id, then the earlier
//! catalog entry (the sum action sorts after every transform).

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::eval::{AccuracyOracle, EvalError};
use crate::graph::{GraphError, StepRecord, TransformationGraph, SUM_LABEL};
use crate::policy::{featurize, PolicyError, PolicyVariant, QPolicy, StateFeatures};
use crate::seeds;
use crate::transforms::{self, Transform, TransformCatalog, TransformError};

pub const DEPTH_PENALTY: f64 = 0.05;
pub const REWARD_WEIGHT: f64 = 0.5;
pub const BLOAT_PENALTY: f64 = 0.01;
pub const BLOAT_FREE_RATIO: f64 = 2.0;
/// Score offset pushing depth-first candidates outside the best node's
/// subtree below every candidate inside it.
const OFF_FRONTIER: f64 = 10.0;
/// Nodes (by accuracy) among which sum actions are proposed.
pub const SUM_CANDIDATES: usize = 3;
pub const DEFAULT_RANDOM_TRIALS: usize = 100;

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("the random baseline needs at least one trial")]
    ZeroTrials,
    #[error("strategy {0} needs a trained policy")]
    MissingPolicy(StrategyKind),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    BreadthFirst,
    DepthFirst,
    GlobalHeuristic,
    Random,
    Rl1,
    Rl2,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::BreadthFirst,
        StrategyKind::DepthFirst,
        StrategyKind::GlobalHeuristic,
        StrategyKind::Random,
        StrategyKind::Rl1,
        StrategyKind::Rl2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::BreadthFirst => "breadth_first",
            StrategyKind::DepthFirst => "depth_first",
            StrategyKind::GlobalHeuristic => "global_heuristic",
            StrategyKind::Random => "random",
            StrategyKind::Rl1 => "rl1",
            StrategyKind::Rl2 => "rl2",
        }
    }

    pub fn parse(s: &str) -> Option<StrategyKind> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn is_learned(self) -> bool {
        matches!(self, StrategyKind::Rl1 | StrategyKind::Rl2)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub policy: Option<QPolicy>,
}

impl Strategy {
    pub fn handcrafted(kind: StrategyKind) -> Strategy {
        Strategy { kind, policy: None }
    }

    pub fn learned(policy: QPolicy) -> Strategy {
        let kind = match policy.variant {
            PolicyVariant::Rl1 => StrategyKind::Rl1,
            PolicyVariant::Rl2 => StrategyKind::Rl2,
        };
        Strategy {
            kind,
            policy: Some(policy),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    /// Catalog index of the transform.
    Transform(usize),
    /// Sum with the partner node.
    Sum { partner: usize },
}

/// A candidate step: a transform applied to `node`, or `node` summed with a
/// partner. For sums, `node` is the more accurate of the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub node: usize,
    pub kind: ActionKind,
}

impl Action {
    /// Weight slot: the catalog index, or one past the catalog for sums.
    pub fn slot(&self, catalog: &TransformCatalog) -> usize {
        match self.kind {
            ActionKind::Transform(i) => i,
            ActionKind::Sum { .. } => catalog.len(),
        }
    }

    pub fn label<'c>(&self, catalog: &'c TransformCatalog) -> &'c str {
        match self.kind {
            ActionKind::Transform(i) => catalog.transforms()[i].name(),
            ActionKind::Sum { .. } => SUM_LABEL,
        }
    }

    pub fn partner(&self) -> Option<usize> {
        match self.kind {
            ActionKind::Sum { partner } => Some(partner),
            ActionKind::Transform(_) => None,
        }
    }

    fn is_selection(&self, catalog: &TransformCatalog) -> bool {
        matches!(self.kind, ActionKind::Transform(i) if catalog.transforms()[i].is_selection())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreConfig {
    pub budget: usize,
    pub h_max: usize,
    /// Propose sums among the top nodes.
    pub sum_actions: bool,
    pub seed: u64,
}

impl ExploreConfig {
    pub fn new(budget: usize, h_max: usize, seed: u64) -> Self {
        ExploreConfig {
            budget,
            h_max,
            sum_actions: true,
            seed,
        }
    }
}

/// Fraction of the budget consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationBudget {
    pub max: usize,
    pub used: usize,
}

impl ExplorationBudget {
    pub fn ratio(&self) -> f64 {
        self.used as f64 / self.max as f64
    }

    pub fn exhausted(&self) -> bool {
        self.used >= self.max
    }
}

/// A graph under exploration plus the bookkeeping that decides which
/// actions are legal.
pub struct Explorer<'c> {
    graph: TransformationGraph,
    catalog: &'c TransformCatalog,
    budget: usize,
    sum_actions: bool,
    /// Per node, per catalog entry: whether the transform has inputs there.
    applicable: Vec<Vec<bool>>,
}

impl<'c> Explorer<'c> {
    pub fn new(
        d0: Dataset,
        catalog: &'c TransformCatalog,
        config: &ExploreConfig,
        oracle: Arc<dyn AccuracyOracle>,
    ) -> Result<Self, ExploreError> {
        if config.budget == 0 {
            return Err(ExploreError::ZeroBudget);
        }
        let graph = TransformationGraph::new(
            d0,
            config.h_max,
            oracle,
            seeds::derive(config.seed, "graph"),
        )?;
        let mut ex = Explorer {
            graph,
            catalog,
            budget: config.budget,
            sum_actions: config.sum_actions,
            applicable: Vec::new(),
        };
        ex.index_new_nodes();
        Ok(ex)
    }

    fn index_new_nodes(&mut self) {
        for node in &self.graph.theta()[self.applicable.len()..] {
            let row = if node.depth < self.graph.h_max() {
                self.catalog
                    .transforms()
                    .iter()
                    .map(|t| transforms::is_applicable(t, &node.dataset))
                    .collect()
            } else {
                vec![false; self.catalog.len()]
            };
            self.applicable.push(row);
        }
    }

    pub fn graph(&self) -> &TransformationGraph {
        &self.graph
    }

    pub fn into_graph(self) -> TransformationGraph {
        self.graph
    }

    pub fn catalog(&self) -> &TransformCatalog {
        self.catalog
    }

    pub fn steps_used(&self) -> usize {
        self.graph.step_count()
    }

    pub fn budget(&self) -> ExplorationBudget {
        ExplorationBudget {
            max: self.budget,
            used: self.steps_used(),
        }
    }

    /// Legal actions ordered by node id, then catalog slot.
    pub fn legal_actions(&self) -> Vec<Action> {
        let g = &self.graph;
        let mut actions = Vec::new();
        for node in g.theta() {
            for (i, t) in self.catalog.transforms().iter().enumerate() {
                if self.applicable[node.id][i] && !g.is_tried(node.id, t.name()) {
                    actions.push(Action {
                        node: node.id,
                        kind: ActionKind::Transform(i),
                    });
                }
            }
        }
        if self.sum_actions {
            actions.extend(self.sum_candidates());
            actions.sort_by_key(|a| (a.node, a.slot(self.catalog), a.partner()));
        }
        actions
    }

    /// Pairs among the most accurate nodes whose feature sets neither
    /// coincide nor contain one another.
    fn sum_candidates(&self) -> Vec<Action> {
        let g = &self.graph;
        let mut ranked: Vec<usize> = (0..g.len()).collect();
        ranked.sort_by(|&a, &b| rank_nodes(g, a, b));
        ranked.truncate(SUM_CANDIDATES);
        let mut out = Vec::new();
        for (i, &a) in ranked.iter().enumerate() {
            for &b in &ranked[i + 1..] {
                if g.has_sum(a, b) || !g.sum_allowed_by_height(a, b) {
                    continue;
                }
                let la = g.theta()[a].dataset.lineage_set();
                let lb = g.theta()[b].dataset.lineage_set();
                if la.is_subset(&lb) || lb.is_subset(&la) {
                    continue;
                }
                out.push(Action {
                    node: a,
                    kind: ActionKind::Sum { partner: b },
                });
            }
        }
        out
    }

    pub fn featurize(&self, action: &Action) -> StateFeatures {
        featurize(
            &self.graph,
            action.node,
            action.label(self.catalog),
            action.is_selection(self.catalog),
            self.budget().ratio(),
        )
    }

    pub fn featurized_actions(&self) -> Vec<(Action, StateFeatures)> {
        self.legal_actions()
            .into_iter()
            .map(|a| {
                let f = self.featurize(&a);
                (a, f)
            })
            .collect()
    }

    /// Commits `action`. Returns `None` (and consumes no budget) when the
    /// transform turns out to add nothing; the action is then never
    /// proposed again.
    pub fn apply(&mut self, action: &Action) -> Result<Option<StepRecord>, ExploreError> {
        let result = match action.kind {
            ActionKind::Transform(i) => {
                let t: &Transform = &self.catalog.transforms()[i];
                self.graph.expand(action.node, t)
            }
            ActionKind::Sum { partner } => self.graph.add_sum_node(action.node, partner),
        };
        match result {
            Ok(_) => {
                self.index_new_nodes();
                Ok(self.graph.steps().last().cloned())
            }
            Err(GraphError::NothingApplicable { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

/// Descending accuracy, then shallower, then older.
fn rank_nodes(g: &TransformationGraph, a: usize, b: usize) -> Ordering {
    let (na, nb) = (&g.theta()[a], &g.theta()[b]);
    nb.accuracy
        .total_cmp(&na.accuracy)
        .then(na.depth.cmp(&nb.depth))
        .then(a.cmp(&b))
}

/// Score of a legal action under a handcrafted strategy. `None` for the
/// random and learned strategies, which need more than the graph.
pub fn handcrafted_reward(
    kind: StrategyKind,
    g: &TransformationGraph,
    action: &Action,
    catalog: &TransformCatalog,
) -> Option<f64> {
    let n = &g.theta()[action.node];
    let depth = n.depth as f64;
    match kind {
        StrategyKind::BreadthFirst => Some(n.accuracy - DEPTH_PENALTY * depth),
        StrategyKind::DepthFirst => {
            let best = g.best_node().id;
            let offset = if g.descends_from(action.node, best) {
                0.0
            } else {
                OFF_FRONTIER
            };
            Some(n.accuracy - offset)
        }
        StrategyKind::GlobalHeuristic => {
            let ratio = n.feature_count() as f64 / g.root().feature_count().max(1) as f64;
            Some(
                n.accuracy + REWARD_WEIGHT * g.average_reward(action.label(catalog))
                    - DEPTH_PENALTY * depth
                    - BLOAT_PENALTY * (ratio - BLOAT_FREE_RATIO).max(0.0),
            )
        }
        StrategyKind::Random | StrategyKind::Rl1 | StrategyKind::Rl2 => None,
    }
}

/// Increase of the best accuracy from one graph state to the next.
pub fn immediate_reward(best_before: f64, best_after: f64) -> f64 {
    (best_after - best_before).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploreStep {
    pub step: usize,
    pub node: usize,
    pub action: String,
    pub partner: Option<usize>,
    pub score: f64,
    pub child: usize,
    pub accuracy: f64,
    pub reward: f64,
    pub best: f64,
}

#[derive(Debug)]
pub struct ExploreOutcome {
    pub graph: TransformationGraph,
    pub steps: Vec<ExploreStep>,
}

impl ExploreOutcome {
    pub fn best_node(&self) -> usize {
        self.graph.best_node().id
    }

    pub fn best_accuracy(&self) -> f64 {
        self.graph.best_accuracy()
    }

    pub fn best_dataset(&self) -> &Dataset {
        &self.graph.best_node().dataset
    }

    /// 1-based step at which the best accuracy first reached `threshold`
    /// (0 when the root already does).
    pub fn steps_to_reach(&self, threshold: f64) -> Option<usize> {
        if self.graph.root().accuracy >= threshold {
            return Some(0);
        }
        self.steps
            .iter()
            .find(|s| s.best >= threshold)
            .map(|s| s.step)
    }
}

/// Runs the exploration loop to budget exhaustion or until no legal action
/// remains.
pub fn explore(
    d0: Dataset,
    catalog: &TransformCatalog,
    strategy: &Strategy,
    config: &ExploreConfig,
    oracle: Arc<dyn AccuracyOracle>,
) -> Result<ExploreOutcome, ExploreError> {
    if strategy.kind.is_learned() && strategy.policy.is_none() {
        return Err(ExploreError::MissingPolicy(strategy.kind));
    }
    if let Some(p) = &strategy.policy {
        p.check_catalog(catalog)?;
    }
    let mut ex = Explorer::new(d0, catalog, config, oracle)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, "strategy"));
    let mut steps = Vec::new();
    while !ex.budget().exhausted() {
        let actions = ex.legal_actions();
        if actions.is_empty() {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, a) in actions.iter().enumerate() {
            let score = match strategy.kind {
                StrategyKind::Random => rng.gen::<f64>(),
                StrategyKind::Rl1 | StrategyKind::Rl2 => {
                    let p = strategy.policy.as_ref().expect("checked above");
                    p.q_value(&ex.featurize(a), a.slot(catalog))?
                }
                kind => handcrafted_reward(kind, ex.graph(), a, catalog).expect("handcrafted"),
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (i, score) = best.expect("non-empty");
        let action = actions[i];
        if let Some(rec) = ex.apply(&action)? {
            steps.push(ExploreStep {
                step: ex.steps_used(),
                node: action.node,
                action: action.label(catalog).to_string(),
                partner: action.partner(),
                score,
                child: rec.node,
                accuracy: rec.accuracy,
                reward: immediate_reward(rec.best_before, rec.best_after),
                best: rec.best_after,
            });
        }
    }
    Ok(ExploreOutcome {
        graph: ex.into_graph(),
        steps,
    })
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub dataset: Dataset,
    pub score: f64,
}

/// Applies every catalog transform to `d0` once, unions the results with
/// `d0`, and keeps the top fraction of features by filter score.
pub fn baseline_expand_reduce(
    d0: &Dataset,
    catalog: &TransformCatalog,
    oracle: &dyn AccuracyOracle,
    seed: u64,
) -> Result<BaselineOutcome, ExploreError> {
    let mut pool = d0.clone();
    let mut fraction = transforms::DEFAULT_SELECTION_FRACTION;
    for (i, t) in catalog.transforms().iter().enumerate() {
        if let Transform::FeatureSelection { fraction: f } = t {
            fraction = *f;
            continue;
        }
        match transforms::apply_transform(t, d0, seeds::derive_indexed(seed, "expand", i as u64)) {
            Ok(d) => pool = pool.sum(&d)?,
            Err(TransformError::NothingApplicable(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let selector = Transform::FeatureSelection { fraction };
    let dataset = if pool.feature_count() > d0.feature_count()
        && transforms::is_applicable(&selector, &pool)
    {
        transforms::select_features(&pool, fraction)?
    } else {
        pool
    };
    let score = oracle.accuracy(&dataset)?;
    Ok(BaselineOutcome { dataset, score })
}

/// Tries `trials` random single applications (a random transform on a
/// random valid input tuple of `d0`) and keeps a trial's derived features
/// only if adding them to everything kept so far raises the score, so the
/// result never scores below `d0`.
pub fn baseline_random(
    d0: &Dataset,
    catalog: &TransformCatalog,
    trials: usize,
    oracle: &dyn AccuracyOracle,
    seed: u64,
) -> Result<BaselineOutcome, ExploreError> {
    if trials == 0 {
        return Err(ExploreError::ZeroTrials);
    }
    let base = oracle.accuracy(d0)?;
    let options: Vec<(&Transform, Vec<Vec<usize>>)> = catalog
        .transforms()
        .iter()
        .filter(|t| !t.is_selection())
        .map(|t| (t, transforms::applicable_inputs(t, d0)))
        .filter(|(_, tuples)| !tuples.is_empty())
        .collect();
    if options.is_empty() {
        return Ok(BaselineOutcome {
            dataset: d0.clone(),
            score: base,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "random-baseline"));
    let mut dataset = d0.clone();
    let mut score = base;
    for _ in 0..trials {
        let (t, tuples) = &options[rng.gen_range(0..options.len())];
        let tuple = &tuples[rng.gen_range(0..tuples.len())];
        let new: Vec<_> = transforms::derive_for_tuple(t, d0, tuple)
            .into_iter()
            .filter(|c| transforms::is_informative_addition(c, &dataset))
            .map(Arc::new)
            .collect();
        if new.is_empty() {
            continue;
        }
        let mut feats = dataset.features().to_vec();
        feats.extend(new);
        let candidate = dataset.with_features(feats)?;
        let candidate_score = oracle.accuracy(&candidate)?;
        if candidate_score > score {
            dataset = candidate;
            score = candidate_score;
        }
    }
    Ok(BaselineOutcome { dataset, score })
}
