//! CART trees on a column-major matrix, grown with per-feature presorted
//! sample orders so each level costs O(features × samples).

use rand::seq::SliceRandom;
use rand::RngCore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    All,
    Sqrt,
}

impl MaxFeatures {
    fn count(self, m: usize) -> usize {
        match self {
            MaxFeatures::All => m,
            MaxFeatures::Sqrt => ((m as f64).sqrt().round() as usize).clamp(1, m.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            max_features: MaxFeatures::All,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Labels<'a> {
    Classes { codes: &'a [u32], n_classes: usize },
    Real(&'a [f64]),
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted tree. Leaves hold a class code (as f64) or a mean.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    n_left: usize,
    threshold: f64,
    score: f64,
}

struct Builder<'a, R> {
    x: &'a [Vec<f64>],
    y: Labels<'a>,
    params: &'a TreeParams,
    rng: &'a mut R,
    sorted: Vec<Vec<u32>>,
    samples: Vec<u32>,
    goes_left: Vec<bool>,
    buf: Vec<u32>,
    counts: Vec<f64>,
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// Grows a tree on `rows` of the column-major matrix `x`.
    pub fn fit<R: RngCore>(
        x: &[Vec<f64>],
        y: Labels<'_>,
        rows: &[usize],
        params: &TreeParams,
        rng: &mut R,
    ) -> DecisionTree {
        let total_rows = match y {
            Labels::Classes { codes, .. } => codes.len(),
            Labels::Real(v) => v.len(),
        };
        let samples: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
        let sorted = x
            .iter()
            .map(|col| {
                let mut s = samples.clone();
                s.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                s
            })
            .collect();
        let n_classes = match y {
            Labels::Classes { n_classes, .. } => n_classes,
            Labels::Real(_) => 0,
        };
        let mut b = Builder {
            x,
            y,
            params,
            rng,
            sorted,
            samples,
            goes_left: vec![false; total_rows],
            buf: Vec::with_capacity(rows.len()),
            counts: vec![0.0; n_classes],
            nodes: Vec::new(),
        };
        if !rows.is_empty() {
            b.build(0, rows.len(), 0);
        } else {
            b.nodes.push(Node::Leaf(0.0));
        }
        DecisionTree { nodes: b.nodes }
    }

    pub fn predict_row(&self, x: &[Vec<f64>], row: usize) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature][row] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

impl<R: RngCore> Builder<'_, R> {
    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let n = hi - lo;
        let (value, pure) = self.node_value(lo, hi);
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf(value));
        if pure
            || n < self.params.min_samples_split
            || self.params.max_depth.is_some_and(|d| depth >= d)
        {
            return idx;
        }
        let Some(split) = self.best_split(lo, hi) else {
            return idx;
        };
        self.partition(lo, hi, &split);
        let left = self.build(lo, lo + split.n_left, depth + 1);
        let right = self.build(lo + split.n_left, hi, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        idx
    }

    /// Leaf value and purity; leaves class counts in `self.counts`.
    fn node_value(&mut self, lo: usize, hi: usize) -> (f64, bool) {
        let rows = &self.samples[lo..hi];
        match self.y {
            Labels::Classes { codes, .. } => {
                self.counts.iter_mut().for_each(|c| *c = 0.0);
                for &r in rows {
                    self.counts[codes[r as usize] as usize] += 1.0;
                }
                let mut best = 0;
                for (c, &k) in self.counts.iter().enumerate() {
                    if k > self.counts[best] {
                        best = c;
                    }
                }
                let pure = self.counts[best] as usize == rows.len();
                (best as f64, pure)
            }
            Labels::Real(y) => {
                let first = y[rows[0] as usize];
                let mut sum = 0.0;
                let mut pure = true;
                for &r in rows {
                    let v = y[r as usize];
                    sum += v;
                    pure &= v == first;
                }
                (sum / rows.len() as f64, pure)
            }
        }
    }

    fn best_split(&mut self, lo: usize, hi: usize) -> Option<Split> {
        let m = self.x.len();
        if m == 0 {
            return None;
        }
        let wanted = self.params.max_features.count(m);
        let mut order: Vec<usize> = (0..m).collect();
        if wanted < m {
            order.shuffle(self.rng);
        }
        let mut visited = 0;
        let mut best: Option<Split> = None;
        for f in order {
            if visited >= wanted {
                break;
            }
            let s = &self.sorted[f][lo..hi];
            let col = &self.x[f];
            if col[s[0] as usize] == col[s[s.len() - 1] as usize] {
                continue;
            }
            visited += 1;
            if let Some(cand) = self.scan(f, lo, hi) {
                let better = match best {
                    None => true,
                    Some(b) => cand.score > b.score || (cand.score == b.score && f < b.feature),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        best
    }

    fn scan(&self, f: usize, lo: usize, hi: usize) -> Option<Split> {
        let s = &self.sorted[f][lo..hi];
        let col = &self.x[f];
        let n = s.len();
        let mut best: Option<(usize, f64)> = None;
        match self.y {
            Labels::Classes { codes, .. } => {
                let mut left = vec![0.0f64; self.counts.len()];
                let mut right = self.counts.clone();
                let mut sq_l = 0.0;
                let mut sq_r: f64 = right.iter().map(|c| c * c).sum();
                for i in 0..n - 1 {
                    let c = codes[s[i] as usize] as usize;
                    sq_l += 2.0 * left[c] + 1.0;
                    left[c] += 1.0;
                    sq_r -= 2.0 * right[c] - 1.0;
                    right[c] -= 1.0;
                    if col[s[i] as usize] < col[s[i + 1] as usize] {
                        let nl = (i + 1) as f64;
                        let score = sq_l / nl + sq_r / (n as f64 - nl);
                        if best.is_none_or(|(_, b)| score > b) {
                            best = Some((i + 1, score));
                        }
                    }
                }
            }
            Labels::Real(y) => {
                let total: f64 = s.iter().map(|&r| y[r as usize]).sum();
                let mut sum_l = 0.0;
                for i in 0..n - 1 {
                    sum_l += y[s[i] as usize];
                    if col[s[i] as usize] < col[s[i + 1] as usize] {
                        let nl = (i + 1) as f64;
                        let sum_r = total - sum_l;
                        let score = sum_l * sum_l / nl + sum_r * sum_r / (n as f64 - nl);
                        if best.is_none_or(|(_, b)| score > b) {
                            best = Some((i + 1, score));
                        }
                    }
                }
            }
        }
        best.map(|(n_left, score)| {
            let a = col[s[n_left - 1] as usize];
            let b = col[s[n_left] as usize];
            let mut threshold = a / 2.0 + b / 2.0;
            if !(threshold >= a && threshold < b) {
                threshold = a;
            }
            Split {
                feature: f,
                n_left,
                threshold,
                score,
            }
        })
    }

    fn partition(&mut self, lo: usize, hi: usize, split: &Split) {
        for &r in &self.sorted[split.feature][lo..lo + split.n_left] {
            self.goes_left[r as usize] = true;
        }
        let goes_left = &self.goes_left;
        let buf = &mut self.buf;
        let stable = |seg: &mut [u32], buf: &mut Vec<u32>| {
            buf.clear();
            buf.extend(seg.iter().copied().filter(|&r| goes_left[r as usize]));
            buf.extend(seg.iter().copied().filter(|&r| !goes_left[r as usize]));
            seg.copy_from_slice(buf);
        };
        for sorted in self.sorted.iter_mut() {
            stable(&mut sorted[lo..hi], buf);
        }
        stable(&mut self.samples[lo..hi], buf);
        for &r in &self.samples[lo..lo + split.n_left] {
            self.goes_left[r as usize] = false;
        }
    }
}
