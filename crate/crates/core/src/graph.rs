//! The transformation graph: a DAG whose nodes are datasets derived from one
//! root and whose edges are transforms or dataset sums (`+`).
//!
//! Every node is evaluated exactly once, when it is committed. Node datasets
//! share column storage with their ancestors, so a child costs only its new
//! columns.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::data::Dataset;
use crate::eval::{AccuracyOracle, EvalError};
use crate::seeds;
use crate::transforms::{self, Transform, TransformError};

pub const SUM_LABEL: &str = "+";
pub const DEFAULT_H_MAX: usize = 5;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{label} was already applied to node {node}")]
    DuplicateAction { node: usize, label: String },
    #[error("sum of nodes {0} and {1} already exists")]
    DuplicateSum(usize, usize),
    #[error("node {node} at depth {depth} cannot be expanded under height limit {h_max}")]
    DepthExceeded {
        node: usize,
        depth: usize,
        h_max: usize,
    },
    #[error("{label} produces nothing new at node {node}")]
    NothingApplicable { node: usize, label: String },
    #[error("no node {0}")]
    NoSuchNode(usize),
    #[error("no edge from {0} to {1}")]
    NoSuchEdge(usize, usize),
    #[error("a sum node needs two distinct parents, got {0} twice")]
    SameParents(usize),
    #[error("malformed graph dump at line {line}: {reason}")]
    BadDump { line: usize, reason: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Root,
    Hierarchical,
    Sum,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Root => "root",
            NodeKind::Hierarchical => "hierarchical",
            NodeKind::Sum => "sum",
        }
    }

    fn parse(s: &str) -> Option<NodeKind> {
        match s {
            "root" => Some(NodeKind::Root),
            "hierarchical" => Some(NodeKind::Hierarchical),
            "sum" => Some(NodeKind::Sum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphNode {
    pub id: usize,
    pub kind: NodeKind,
    pub parents: Vec<usize>,
    /// Transform name, `+`, or `None` for the root.
    pub label: Option<String>,
    pub depth: usize,
    pub accuracy: f64,
    pub dataset: Arc<Dataset>,
}

impl GraphNode {
    pub fn feature_count(&self) -> usize {
        self.dataset.feature_count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub label: String,
}

/// Accuracy bookkeeping for one committed step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub node: usize,
    pub label: String,
    pub accuracy: f64,
    pub best_before: f64,
    pub best_after: f64,
}

impl StepRecord {
    /// Increase in the graph's best accuracy caused by this step.
    pub fn reward(&self) -> f64 {
        self.best_after - self.best_before
    }
}

pub struct TransformationGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<Edge>,
    h_max: usize,
    /// Lets sum nodes sit above the height limit. Used by exhaustive
    /// construction, where every pair of tree nodes is summed.
    sums_exempt_from_height: bool,
    applied: HashSet<(usize, String)>,
    dead: HashSet<(usize, String)>,
    sums: HashSet<(usize, usize)>,
    steps: Vec<StepRecord>,
    rewards: BTreeMap<String, (f64, usize)>,
    best: usize,
    seed: u64,
    oracle: Arc<dyn AccuracyOracle>,
}

impl fmt::Debug for TransformationGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformationGraph")
            .field("nodes", &self.nodes.len())
            .field("h_max", &self.h_max)
            .field("steps", &self.steps.len())
            .field("best", &self.best)
            .finish()
    }
}

impl TransformationGraph {
    /// A graph holding only `d0`, evaluated with `oracle`.
    pub fn new(
        d0: Dataset,
        h_max: usize,
        oracle: Arc<dyn AccuracyOracle>,
        seed: u64,
    ) -> Result<Self, GraphError> {
        let accuracy = oracle.accuracy(&d0)?;
        Ok(TransformationGraph {
            nodes: vec![GraphNode {
                id: 0,
                kind: NodeKind::Root,
                parents: Vec::new(),
                label: None,
                depth: 0,
                accuracy,
                dataset: Arc::new(d0),
            }],
            edges: Vec::new(),
            h_max,
            sums_exempt_from_height: false,
            applied: HashSet::new(),
            dead: HashSet::new(),
            sums: HashSet::new(),
            steps: Vec::new(),
            rewards: BTreeMap::new(),
            best: 0,
            seed,
            oracle,
        })
    }

    pub fn set_sums_exempt_from_height(&mut self, exempt: bool) {
        self.sums_exempt_from_height = exempt;
    }

    pub fn h_max(&self) -> usize {
        self.h_max
    }

    pub fn root(&self) -> &GraphNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> Result<&GraphNode, GraphError> {
        self.nodes.get(id).ok_or(GraphError::NoSuchNode(id))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    /// Committed expansion steps (non-root nodes).
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// All nodes.
    pub fn theta(&self) -> &[GraphNode] {
        &self.nodes
    }

    /// Hierarchical nodes only.
    pub fn theta_h(&self) -> Vec<&GraphNode> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Hierarchical)
            .collect()
    }

    /// Label of the edge from `src` to `dst`.
    pub fn lambda(&self, src: usize, dst: usize) -> Result<&str, GraphError> {
        self.edges
            .iter()
            .find(|e| e.src == src && e.dst == dst)
            .map(|e| e.label.as_str())
            .ok_or(GraphError::NoSuchEdge(src, dst))
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &GraphNode> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.src == id)
            .map(|e| &self.nodes[e.dst])
    }

    /// Highest accuracy; ties go to the shallower node, then the older one.
    pub fn best_node(&self) -> &GraphNode {
        &self.nodes[self.best]
    }

    pub fn best_accuracy(&self) -> f64 {
        self.nodes[self.best].accuracy
    }

    /// Whether `id` is `ancestor` or lies below it.
    pub fn descends_from(&self, id: usize, ancestor: usize) -> bool {
        if id == ancestor {
            return true;
        }
        self.nodes[id]
            .parents
            .iter()
            .any(|&p| p >= ancestor && self.descends_from(p, ancestor))
    }

    /// Whether `label` has been applied (or found inapplicable) at `node`.
    pub fn is_tried(&self, node: usize, label: &str) -> bool {
        let key = (node, label.to_string());
        self.applied.contains(&key) || self.dead.contains(&key)
    }

    pub fn has_sum(&self, a: usize, b: usize) -> bool {
        self.sums.contains(&(a.min(b), a.max(b)))
    }

    /// Depth a sum of `a` and `b` would have.
    pub fn sum_depth(&self, a: usize, b: usize) -> usize {
        1 + self.nodes[a].depth.max(self.nodes[b].depth)
    }

    pub fn sum_allowed_by_height(&self, a: usize, b: usize) -> bool {
        self.sums_exempt_from_height || self.sum_depth(a, b) <= self.h_max
    }

    /// Mean immediate reward of the steps labeled `label`, 0 when unused.
    pub fn average_reward(&self, label: &str) -> f64 {
        match self.rewards.get(label) {
            Some(&(total, n)) if n > 0 => total / n as f64,
            _ => 0.0,
        }
    }

    /// Number of edges labeled `label` on the path from the root to `id`,
    /// following the first parent of sum nodes.
    pub fn path_count(&self, id: usize, label: &str) -> usize {
        let mut count = 0;
        let mut cur = id;
        while let Some(&parent) = self.nodes[cur].parents.first() {
            if self.nodes[cur].label.as_deref() == Some(label) {
                count += 1;
            }
            cur = parent;
        }
        count
    }

    /// Accuracy of `id` minus that of its (first) parent; 0 at the root.
    pub fn gain(&self, id: usize) -> f64 {
        match self.nodes[id].parents.first() {
            Some(&p) => self.nodes[id].accuracy - self.nodes[p].accuracy,
            None => 0.0,
        }
    }

    fn check_expandable(&self, node: usize, label: &str) -> Result<(), GraphError> {
        let n = self.node(node)?;
        if self.is_tried(node, label) {
            return Err(GraphError::DuplicateAction {
                node,
                label: label.to_string(),
            });
        }
        if n.depth >= self.h_max {
            return Err(GraphError::DepthExceeded {
                node,
                depth: n.depth,
                h_max: self.h_max,
            });
        }
        Ok(())
    }

    /// Applies a catalog transform to `node` and commits the evaluated child.
    pub fn expand(&mut self, node: usize, t: &Transform) -> Result<usize, GraphError> {
        let seed = seeds::derive_indexed(self.seed, "apply", node as u64);
        self.expand_with(node, t.name(), |d| transforms::apply_any(t, d, seed))
    }

    /// Like [`expand`](Self::expand) with an arbitrary dataset operation.
    /// An operation that yields nothing new marks the action as tried
    /// without consuming a step.
    pub fn expand_with<F>(&mut self, node: usize, label: &str, op: F) -> Result<usize, GraphError>
    where
        F: FnOnce(&Dataset) -> Result<Dataset, TransformError>,
    {
        self.check_expandable(node, label)?;
        let parent = Arc::clone(&self.nodes[node].dataset);
        let depth = self.nodes[node].depth + 1;
        let child = match op(&parent) {
            Ok(d) if d.signature() != parent.signature() => d,
            Ok(_)
            | Err(TransformError::NothingApplicable(_))
            | Err(TransformError::TooFewFeatures(_))
            | Err(TransformError::SelectionNotApplicable) => {
                self.dead.insert((node, label.to_string()));
                return Err(GraphError::NothingApplicable {
                    node,
                    label: label.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        };
        let accuracy = self.oracle.accuracy(&child)?;
        self.applied.insert((node, label.to_string()));
        Ok(self.commit(
            NodeKind::Hierarchical,
            vec![node],
            label,
            depth,
            accuracy,
            child,
        ))
    }

    /// Commits the sum of nodes `a` and `b`.
    pub fn add_sum_node(&mut self, a: usize, b: usize) -> Result<usize, GraphError> {
        self.node(a)?;
        self.node(b)?;
        if a == b {
            return Err(GraphError::SameParents(a));
        }
        let key = (a.min(b), a.max(b));
        if self.sums.contains(&key) {
            return Err(GraphError::DuplicateSum(key.0, key.1));
        }
        let depth = self.sum_depth(a, b);
        if !self.sum_allowed_by_height(a, b) {
            let deeper = if self.nodes[a].depth >= self.nodes[b].depth {
                a
            } else {
                b
            };
            return Err(GraphError::DepthExceeded {
                node: deeper,
                depth: self.nodes[deeper].depth,
                h_max: self.h_max,
            });
        }
        let d = self.nodes[a]
            .dataset
            .sum(&self.nodes[b].dataset)
            .map_err(TransformError::from)?;
        let accuracy = self.oracle.accuracy(&d)?;
        self.sums.insert(key);
        Ok(self.commit(NodeKind::Sum, vec![a, b], SUM_LABEL, depth, accuracy, d))
    }

    fn commit(
        &mut self,
        kind: NodeKind,
        parents: Vec<usize>,
        label: &str,
        depth: usize,
        accuracy: f64,
        dataset: Dataset,
    ) -> usize {
        let id = self.nodes.len();
        let best_before = self.best_accuracy();
        for &p in &parents {
            self.edges.push(Edge {
                src: p,
                dst: id,
                label: label.to_string(),
            });
        }
        self.nodes.push(GraphNode {
            id,
            kind,
            parents,
            label: Some(label.to_string()),
            depth,
            accuracy,
            dataset: Arc::new(dataset),
        });
        let incumbent = &self.nodes[self.best];
        if accuracy > incumbent.accuracy
            || (accuracy == incumbent.accuracy && depth < incumbent.depth)
        {
            self.best = id;
        }
        let record = StepRecord {
            node: id,
            label: label.to_string(),
            accuracy,
            best_before,
            best_after: self.best_accuracy(),
        };
        let entry = self.rewards.entry(label.to_string()).or_insert((0.0, 0));
        entry.0 += record.reward();
        entry.1 += 1;
        self.steps.push(record);
        id
    }

    /// Plain-record view of the graph, for export.
    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id,
                    kind: n.kind,
                    parents: n.parents.clone(),
                    label: n.label.clone(),
                    depth: n.depth,
                    accuracy: n.accuracy,
                    features: n.feature_count(),
                })
                .collect(),
        }
    }
}

/// Builds the height-bounded complete graph: every node of depth < `h` is
/// expanded with every operation in `ops`, then every pair of the resulting
/// tree nodes is summed. Sum nodes are not expanded further.
pub fn build_complete<F>(
    d0: Dataset,
    h: usize,
    ops: &[(&str, F)],
    oracle: Arc<dyn AccuracyOracle>,
) -> Result<TransformationGraph, GraphError>
where
    F: Fn(&Dataset) -> Result<Dataset, TransformError>,
{
    let mut g = TransformationGraph::new(d0, h, oracle, 0)?;
    g.set_sums_exempt_from_height(true);
    let mut frontier = vec![0];
    for _ in 0..h {
        let mut next = Vec::new();
        for &n in &frontier {
            for (label, op) in ops {
                next.push(g.expand_with(n, label, op)?);
            }
        }
        frontier = next;
    }
    let tree = g.len();
    for a in 0..tree {
        for b in a + 1..tree {
            g.add_sum_node(a, b)?;
        }
    }
    Ok(g)
}

/// Closed-form node counts of the height-bounded complete graph with
/// `t_count` transforms: `(t^(h+1) − 2, (t^(h+1) − 1)(t^(h+1) − 2) / 2)`.
/// Returns `None` on overflow.
pub fn complete_counts(t_count: u64, h: u32) -> Option<(u128, u128)> {
    let p = u128::from(t_count).checked_pow(h.checked_add(1)?)?;
    let hierarchical = p.checked_sub(2)?;
    let sums = p.checked_sub(1)?.checked_mul(hierarchical)? / 2;
    Some((hierarchical, sums))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub kind: NodeKind,
    pub parents: Vec<usize>,
    pub label: Option<String>,
    pub depth: usize,
    pub accuracy: f64,
    pub features: usize,
}

/// The exportable part of a graph: one record per node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphSummary {
    pub nodes: Vec<NodeRecord>,
}

const DUMP_HEADER: &str = "id\tkind\tparents\tlabel\tdepth\taccuracy\tfeatures";

impl GraphSummary {
    /// Tab-separated dump, one node per line after a header.
    pub fn to_text(&self) -> String {
        let mut out = String::from(DUMP_HEADER);
        out.push('\n');
        for n in &self.nodes {
            let parents = if n.parents.is_empty() {
                "-".to_string()
            } else {
                n.parents
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                n.id,
                n.kind.as_str(),
                parents,
                n.label.as_deref().unwrap_or("-"),
                n.depth,
                n.accuracy,
                n.features
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<GraphSummary, GraphError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == DUMP_HEADER => {}
            _ => {
                return Err(GraphError::BadDump {
                    line: 1,
                    reason: "missing header".into(),
                })
            }
        }
        let mut nodes = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| GraphError::BadDump {
                line: i + 1,
                reason: reason.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
            let parents = if cols[2] == "-" {
                Vec::new()
            } else {
                cols[2].split(',').map(num).collect::<Result<_, _>>()?
            };
            nodes.push(NodeRecord {
                id: num(cols[0])?,
                kind: NodeKind::parse(cols[1]).ok_or_else(|| bad("bad node kind"))?,
                parents,
                label: (cols[3] != "-").then(|| cols[3].to_string()),
                depth: num(cols[4])?,
                accuracy: cols[5].parse().map_err(|_| bad("bad accuracy"))?,
                features: num(cols[6])?,
            });
        }
        Ok(GraphSummary { nodes })
    }

    /// Graphviz rendering; sum nodes are boxes, the rest ellipses.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph transformation_graph {\n");
        for n in &self.nodes {
            let shape = if n.kind == NodeKind::Sum {
                "box"
            } else {
                "ellipse"
            };
            let _ = writeln!(
                out,
                "  n{} [shape={}, label=\"D{}\\n{:.4}\"];",
                n.id, shape, n.id, n.accuracy
            );
        }
        for n in &self.nodes {
            for p in &n.parents {
                let label = n.label.as_deref().unwrap_or("");
                let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", p, n.id, label);
            }
        }
        out.push_str("}\n");
        out
    }
}
