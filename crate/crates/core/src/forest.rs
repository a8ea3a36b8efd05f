//! CART regression trees, bagged forests, and quantile regression forests.
//!
//! Every leaf keeps the full multiset of in-bag targets that reached it (a
//! row drawn twice by the bootstrap appears twice), so one fitted forest
//! answers both mean queries (average of leaf means) and quantile queries
//! (inverse of the weighted empirical CDF built from leaf co-membership).

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::make_folds;
use crate::error::{Error, Result};
use crate::metrics::{mse, pinball_between, QuantileLevel, CDF_EPS};
use crate::rng::{derive_seed, SplitMix64};

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hyper {
    pub n_estimators: usize,
    /// `None` grows until leaves are pure or hold a single sample.
    pub max_depth: Option<usize>,
    pub max_features: usize,
    pub min_samples_leaf: usize,
}

impl Hyper {
    pub fn new(n_estimators: usize, max_depth: Option<usize>, max_features: usize) -> Self {
        Self {
            n_estimators,
            max_depth,
            max_features,
            min_samples_leaf: 1,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::InvalidArgument("n_estimators must be at least 1".into()));
        }
        if self.max_features == 0 || self.max_features > p {
            return Err(Error::InvalidArgument(format!(
                "max_features must lie in [1, {p}], got {}",
                self.max_features
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// How the weighted empirical CDF is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileInterp {
    /// Smallest stored target whose cumulative weight reaches the level.
    #[default]
    Lower,
    /// Linear interpolation between the two CDF jump points around the level.
    Linear,
}

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training row indices, one entry per in-bag occurrence.
        rows: Vec<usize>,
        targets: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return k,
            }
        }
    }

    pub fn leaf(&self, x: &[f64]) -> (&[usize], &[f64]) {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { rows, targets } => (rows, targets),
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match &t.nodes[k] {
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Single leaf holding every sample.
    pub fn stump(rows: Vec<usize>, targets: Vec<f64>) -> Self {
        Tree {
            nodes: vec![Node::Leaf { rows, targets }],
        }
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    hyper: &'a Hyper,
    /// Tie-break order of each feature (position of its name when sorted).
    rank: &'a [usize],
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl TreeBuilder<'_> {
    fn build(&mut self, samples: Vec<usize>, depth: usize, rng: &mut SplitMix64) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            rows: Vec::new(),
            targets: Vec::new(),
        });
        let at_depth_limit = self.hyper.max_depth.is_some_and(|d| depth >= d);
        let y0 = self.y[samples[0]];
        let pure = samples.iter().all(|&i| self.y[i] == y0);
        let too_small = samples.len() < 2.max(2 * self.hyper.min_samples_leaf);
        let split = if at_depth_limit || pure || too_small {
            None
        } else {
            self.best_split(&samples, rng)
        };
        match split {
            None => {
                let mut rows = samples;
                rows.sort_unstable();
                let targets = rows.iter().map(|&i| self.y[i]).collect();
                self.nodes[id] = Node::Leaf { rows, targets };
            }
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = samples
                    .into_iter()
                    .partition(|&i| self.x[i][s.feature] <= s.threshold);
                let left = self.build(l, depth + 1, rng);
                let right = self.build(r, depth + 1, rng);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    /// Visit features in random order, scoring the first `max_features` that
    /// are not constant within the node.
    fn best_split(&self, samples: &[usize], rng: &mut SplitMix64) -> Option<SplitChoice> {
        let p = self.x[0].len();
        let mut order: Vec<usize> = (0..p).collect();
        let mut best: Option<SplitChoice> = None;
        let mut evaluated = 0;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
        for k in 0..p {
            if evaluated == self.hyper.max_features {
                break;
            }
            let j = k + rng.below(p - k);
            order.swap(k, j);
            let f = order[k];
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.x[i][f], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            evaluated += 1;
            if let Some(c) = self.scan_feature(f, &pairs) {
                best = Some(match best {
                    None => c,
                    Some(b) => better(b, c, self.rank),
                });
            }
        }
        best
    }

    fn scan_feature(&self, feature: usize, pairs: &[(f64, f64)]) -> Option<SplitChoice> {
        let n = pairs.len();
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let total_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
        let min_leaf = self.hyper.min_samples_leaf;
        let mut s = 0.0;
        let mut sq = 0.0;
        let mut best: Option<SplitChoice> = None;
        for k in 0..n - 1 {
            s += pairs[k].1;
            sq += pairs[k].1 * pairs[k].1;
            let nl = k + 1;
            let nr = n - nl;
            if pairs[k].0 == pairs[k + 1].0 || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let sse_l = sq - s * s / nl as f64;
            let rs = total - s;
            let sse_r = (total_sq - sq) - rs * rs / nr as f64;
            let mut threshold = 0.5 * (pairs[k].0 + pairs[k + 1].0);
            if threshold >= pairs[k + 1].0 {
                threshold = pairs[k].0;
            }
            let c = SplitChoice {
                feature,
                threshold,
                score: sse_l + sse_r,
            };
            best = Some(match best {
                None => c,
                Some(b) => better(b, c, self.rank),
            });
        }
        best
    }
}

/// Lower score wins; near-equal scores fall back to feature rank, then lowest threshold.
fn better(a: SplitChoice, b: SplitChoice, rank: &[usize]) -> SplitChoice {
    let tol = 1e-12 * (1.0 + a.score.abs().max(b.score.abs()));
    if b.score < a.score - tol {
        b
    } else if a.score < b.score - tol {
        a
    } else if (rank[b.feature], b.threshold) < (rank[a.feature], a.threshold) {
        b
    } else {
        a
    }
}

/// Grow one tree on the given (possibly repeated) sample indices.
///
/// Equal-score splits go to the lowest column index.
pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[f64],
    samples: Vec<usize>,
    hyper: &Hyper,
    rng: &mut SplitMix64,
) -> Tree {
    let rank: Vec<usize> = (0..x[0].len()).collect();
    fit_tree_ranked(x, y, samples, hyper, &rank, rng)
}

fn fit_tree_ranked(
    x: &[Vec<f64>],
    y: &[f64],
    samples: Vec<usize>,
    hyper: &Hyper,
    rank: &[usize],
    rng: &mut SplitMix64,
) -> Tree {
    assert!(!samples.is_empty(), "cannot grow a tree on zero samples");
    let mut b = TreeBuilder {
        x,
        y,
        hyper,
        rank,
        nodes: Vec::new(),
    };
    b.build(samples, 0, rng);
    Tree { nodes: b.nodes }
}

// ---------------------------------------------------------------------------
// Forest
// ---------------------------------------------------------------------------

/// Precomputed per-leaf weights over training rows sorted by target.
#[derive(Debug, Clone)]
struct WeightIndex {
    /// Target of each slot, ascending.
    slot_targets: Vec<f64>,
    /// For each tree, for each node: `(slot, weight)` pairs (empty for splits).
    leaf_weights: Vec<Vec<Vec<(u32, f64)>>>,
    /// Leaf means per tree per node.
    leaf_means: Vec<Vec<f64>>,
}

impl WeightIndex {
    fn build(trees: &[Tree], n_train: usize) -> Self {
        let mut target_of = vec![None; n_train];
        for t in trees {
            for node in &t.nodes {
                if let Node::Leaf { rows, targets } = node {
                    for (&r, &v) in rows.iter().zip(targets) {
                        target_of[r] = Some(v);
                    }
                }
            }
        }
        let mut used: Vec<(f64, usize)> = target_of
            .iter()
            .enumerate()
            .filter_map(|(r, v)| v.map(|v| (v, r)))
            .collect();
        used.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut slot_of = vec![u32::MAX; n_train];
        for (s, &(_, r)) in used.iter().enumerate() {
            slot_of[r] = s as u32;
        }
        let b = trees.len() as f64;
        let mut leaf_weights = Vec::with_capacity(trees.len());
        let mut leaf_means = Vec::with_capacity(trees.len());
        for t in trees {
            let mut lw = Vec::with_capacity(t.nodes.len());
            let mut lm = Vec::with_capacity(t.nodes.len());
            for node in &t.nodes {
                match node {
                    Node::Leaf { rows, targets } => {
                        let m = rows.len() as f64;
                        let mut pairs: Vec<(u32, f64)> = Vec::new();
                        // rows are sorted, so equal rows are adjacent
                        for &r in rows {
                            let s = slot_of[r];
                            match pairs.last_mut() {
                                Some((ls, c)) if *ls == s => *c += 1.0,
                                _ => pairs.push((s, 1.0)),
                            }
                        }
                        for p in &mut pairs {
                            p.1 /= m * b;
                        }
                        lw.push(pairs);
                        lm.push(targets.iter().sum::<f64>() / m);
                    }
                    Node::Split { .. } => {
                        lw.push(Vec::new());
                        lm.push(f64::NAN);
                    }
                }
            }
            leaf_weights.push(lw);
            leaf_means.push(lm);
        }
        Self {
            slot_targets: used.into_iter().map(|(v, _)| v).collect(),
            leaf_weights,
            leaf_means,
        }
    }

    fn invert(&self, acc: &[f64], tau: f64, interp: QuantileInterp) -> f64 {
        let mut cum = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        let mut last = None;
        for (s, &w) in acc.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let before = cum;
            cum += w;
            last = Some(s);
            if cum >= tau - CDF_EPS {
                let y = self.slot_targets[s];
                return match (interp, prev) {
                    (QuantileInterp::Linear, Some((py, pc))) if cum - tau > CDF_EPS => {
                        py + (tau - pc) / (cum - before).max(f64::MIN_POSITIVE) * (y - py)
                    }
                    _ => y,
                };
            }
            prev = Some((self.slot_targets[s], cum));
        }
        self.slot_targets[last.expect("forest holds at least one target")]
    }
}

#[derive(Debug, Clone)]
pub struct QuantileForest {
    trees: Vec<Tree>,
    hyper: Hyper,
    feature_names: Vec<String>,
    seed: u64,
    n_train: usize,
    index: WeightIndex,
}

impl PartialEq for QuantileForest {
    fn eq(&self, other: &Self) -> bool {
        self.trees == other.trees
            && self.hyper == other.hyper
            && self.feature_names == other.feature_names
            && self.seed == other.seed
            && self.n_train == other.n_train
    }
}

fn check_training_data(x: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty X and y, got {} rows and {} targets",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    if p == 0 || names.len() != p {
        return Err(Error::InvalidArgument(format!(
            "{} feature names for {p} columns",
            names.len()
        )));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != p {
            return Err(Error::InvalidArgument(format!("row {i} has width {}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) || !y[i].is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite value in row {i}")));
        }
    }
    Ok(p)
}

/// Split ties are resolved by feature name so that reordering columns
/// (together with their names) leaves the fitted trees unchanged.
fn name_rank(names: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| names[a].cmp(&names[b]).then(a.cmp(&b)));
    let mut rank = vec![0; names.len()];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r;
    }
    rank
}

impl QuantileForest {
    /// Bootstrap-bagged forest; tree `t` draws from `derive_seed(seed, "tree", [t])`.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        feature_names: &[String],
        hyper: Hyper,
        seed: u64,
    ) -> Result<Self> {
        let p = check_training_data(x, y, feature_names)?;
        hyper.validate(p)?;
        let n = x.len();
        let rank = name_rank(feature_names);
        let trees: Vec<Tree> = (0..hyper.n_estimators)
            .into_par_iter()
            .map(|t| {
                let mut rng = SplitMix64::for_purpose(seed, "tree", &[t as u64]);
                let samples: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
                fit_tree_ranked(x, y, samples, &hyper, &rank, &mut rng)
            })
            .collect();
        Ok(Self::from_parts(trees, hyper, feature_names.to_vec(), seed, n))
    }

    /// Forest grown on caller-supplied resampling indices (one list per tree).
    pub fn fit_with_samples(
        x: &[Vec<f64>],
        y: &[f64],
        feature_names: &[String],
        hyper: Hyper,
        seed: u64,
        samples: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let p = check_training_data(x, y, feature_names)?;
        hyper.validate(p)?;
        if samples.len() != hyper.n_estimators {
            return Err(Error::InvalidArgument(format!(
                "{} sample lists for {} trees",
                samples.len(),
                hyper.n_estimators
            )));
        }
        let n = x.len();
        if samples.iter().any(|s| s.is_empty() || s.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidArgument("invalid resampling indices".into()));
        }
        let rank = name_rank(feature_names);
        let trees = samples
            .into_par_iter()
            .enumerate()
            .map(|(t, s)| {
                let mut rng = SplitMix64::for_purpose(seed, "tree-features", &[t as u64]);
                fit_tree_ranked(x, y, s, &hyper, &rank, &mut rng)
            })
            .collect();
        Ok(Self::from_parts(trees, hyper, feature_names.to_vec(), seed, n))
    }

    pub fn from_parts(
        trees: Vec<Tree>,
        hyper: Hyper,
        feature_names: Vec<String>,
        seed: u64,
        n_train: usize,
    ) -> Self {
        let index = WeightIndex::build(&trees, n_train);
        Self {
            trees,
            hyper,
            feature_names,
            seed,
            n_train,
            index,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    fn check_row(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::InvalidArgument(format!(
                "row width {} does not match {} features",
                x.len(),
                self.n_features()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite input".into()));
        }
        Ok(())
    }

    /// Average over trees of the in-bag mean of the leaf reached by `x`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_row(x)?;
        Ok(self.predict_mean_unchecked(x))
    }

    pub(crate) fn predict_mean_unchecked(&self, x: &[f64]) -> f64 {
        let s: f64 = self
            .trees
            .iter()
            .enumerate()
            .map(|(t, tree)| self.index.leaf_means[t][tree.leaf_index(x)])
            .sum();
        s / self.trees.len() as f64
    }

    /// Meinshausen weights `w_i(x)` over training rows (length `n_train`).
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_row(x)?;
        let b = self.trees.len() as f64;
        let mut w = vec![0.0; self.n_train];
        for tree in &self.trees {
            let (rows, _) = tree.leaf(x);
            let m = rows.len() as f64;
            for &r in rows {
                w[r] += 1.0 / (m * b);
            }
        }
        Ok(w)
    }

    pub fn predict_quantile(&self, x: &[f64], tau: QuantileLevel) -> Result<f64> {
        self.predict_quantile_with(x, tau, QuantileInterp::Lower)
    }

    pub fn predict_quantile_with(
        &self,
        x: &[f64],
        tau: QuantileLevel,
        interp: QuantileInterp,
    ) -> Result<f64> {
        self.check_row(x)?;
        Ok(self.predict_quantile_unchecked(x, tau.get(), interp))
    }

    pub(crate) fn predict_quantile_unchecked(&self, x: &[f64], tau: f64, interp: QuantileInterp) -> f64 {
        let mut acc = vec![0.0; self.index.slot_targets.len()];
        for (t, tree) in self.trees.iter().enumerate() {
            for &(s, w) in &self.index.leaf_weights[t][tree.leaf_index(x)] {
                acc[s as usize] += w;
            }
        }
        self.index.invert(&acc, tau, interp)
    }

    pub fn predict(&self, x: &[f64], target: PredictionTarget) -> Result<f64> {
        match target {
            PredictionTarget::Mean => self.predict_mean(x),
            PredictionTarget::Quantile { tau, interp } => self.predict_quantile_with(x, tau, interp),
        }
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>], target: PredictionTarget) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r, target)).collect()
    }

    // Hooks for the explainer: leaf lookup tables keyed by node index.

    pub(crate) fn leaf_weight_list(&self, tree: usize, node: usize) -> &[(u32, f64)] {
        &self.index.leaf_weights[tree][node]
    }

    pub(crate) fn leaf_mean(&self, tree: usize, node: usize) -> f64 {
        self.index.leaf_means[tree][node]
    }

    pub(crate) fn slot_targets(&self) -> &[f64] {
        &self.index.slot_targets
    }

    // -----------------------------------------------------------------------
    // Persistence
    // -----------------------------------------------------------------------

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            hyper: self.hyper,
            seed: self.seed,
            n_train: self.n_train,
            feature_names: self.feature_names.clone(),
            trees: self.trees.iter().map(|t| nest(t, 0)).collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct VersionProbe {
            version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text)
            .map_err(|e| Error::Model(format!("corrupt model file: {e}")))?;
        if probe.version != MODEL_FILE_VERSION {
            return Err(Error::Model(format!(
                "model file version {} is not supported (expected {MODEL_FILE_VERSION})",
                probe.version
            )));
        }
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::Model(format!("corrupt model file: {e}")))?;
        if file.trees.len() != file.hyper.n_estimators {
            return Err(Error::Model(format!(
                "{} trees stored but n_estimators is {}",
                file.trees.len(),
                file.hyper.n_estimators
            )));
        }
        let p = file.feature_names.len();
        let mut trees = Vec::with_capacity(file.trees.len());
        for nested in &file.trees {
            let mut nodes = Vec::new();
            flatten(nested, &mut nodes, p, file.n_train)?;
            trees.push(Tree { nodes });
        }
        Ok(Self::from_parts(trees, file.hyper, file.feature_names, file.seed, file.n_train))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// What a forest prediction returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredictionTarget {
    Mean,
    Quantile {
        tau: QuantileLevel,
        #[serde(default)]
        interp: QuantileInterp,
    },
}

impl PredictionTarget {
    pub fn quantile(tau: f64) -> Result<Self> {
        Ok(Self::Quantile {
            tau: QuantileLevel::new(tau)?,
            interp: QuantileInterp::Lower,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    hyper: Hyper,
    seed: u64,
    n_train: usize,
    feature_names: Vec<String>,
    trees: Vec<NestedNode>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NestedNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<NestedNode>,
        right: Box<NestedNode>,
    },
    Leaf {
        rows: Vec<usize>,
        targets: Vec<f64>,
    },
}

fn nest(t: &Tree, k: usize) -> NestedNode {
    match &t.nodes[k] {
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => NestedNode::Split {
            feature: *feature,
            threshold: *threshold,
            left: Box::new(nest(t, *left)),
            right: Box::new(nest(t, *right)),
        },
        Node::Leaf { rows, targets } => NestedNode::Leaf {
            rows: rows.clone(),
            targets: targets.clone(),
        },
    }
}

fn flatten(n: &NestedNode, out: &mut Vec<Node>, p: usize, n_train: usize) -> Result<usize> {
    let id = out.len();
    match n {
        NestedNode::Leaf { rows, targets } => {
            if rows.is_empty() || rows.len() != targets.len() || rows.iter().any(|&r| r >= n_train) {
                return Err(Error::Model("corrupt model file: malformed leaf".into()));
            }
            out.push(Node::Leaf {
                rows: rows.clone(),
                targets: targets.clone(),
            });
        }
        NestedNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if *feature >= p {
                return Err(Error::Model(format!(
                    "corrupt model file: split on feature {feature} of {p}"
                )));
            }
            out.push(Node::Leaf {
                rows: Vec::new(),
                targets: Vec::new(),
            });
            let l = flatten(left, out, p, n_train)?;
            let r = flatten(right, out, p, n_train)?;
            out[id] = Node::Split {
                feature: *feature,
                threshold: *threshold,
                left: l,
                right: r,
            };
        }
    }
    Ok(id)
}

// ---------------------------------------------------------------------------
// Tuning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub max_features: Vec<usize>,
}

impl HyperGrid {
    /// n_estimators {100, 200, 500}, depth {2, 3, 4, 5, 7}, max_features {1, 2, 3, 6, 9, p}.
    pub fn default_for(p: usize) -> Self {
        let mut mf: Vec<usize> = [1, 2, 3, 6, 9, p].into_iter().filter(|&m| m >= 1 && m <= p).collect();
        mf.sort_unstable();
        mf.dedup();
        Self {
            n_estimators: vec![100, 200, 500],
            max_depth: [2, 3, 4, 5, 7].into_iter().map(Some).collect(),
            max_features: mf,
        }
    }

    pub fn candidates(&self) -> Vec<Hyper> {
        let mut out = Vec::new();
        for &n in &self.n_estimators {
            for &d in &self.max_depth {
                for &m in &self.max_features {
                    out.push(Hyper::new(n, d, m));
                }
            }
        }
        out
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.n_estimators.is_empty() || self.max_depth.is_empty() || self.max_features.is_empty() {
            return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
        }
        if self.n_estimators.contains(&0) || self.max_depth.contains(&Some(0)) {
            return Err(Error::InvalidArgument("grid candidates must be at least 1".into()));
        }
        if self.max_features.iter().any(|&m| m == 0 || m > p) {
            return Err(Error::InvalidArgument(format!("max_features candidates must lie in [1, {p}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TuneObjective {
    /// Fold-mean pinball loss of the quantile prediction.
    Pinball { tau: QuantileLevel },
    /// Fold-mean squared error of the mean prediction.
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: Hyper,
    pub best_score: f64,
    /// Every candidate with its fold-mean score, in grid order.
    pub scores: Vec<(Hyper, f64)>,
}

fn depth_key(d: Option<usize>) -> usize {
    d.unwrap_or(usize::MAX)
}

/// Exhaustive grid search with `folds`-fold CV.
///
/// Ties are broken by fewer trees, then smaller depth, then fewer features.
pub fn tune(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    grid: &HyperGrid,
    objective: TuneObjective,
    folds: usize,
    seed: u64,
) -> Result<TuneResult> {
    let p = check_training_data(x, y, feature_names)?;
    grid.validate(p)?;
    let plan = make_folds(x.len(), folds, derive_seed(seed, "tune-folds", &[]), None)?;
    let splits = plan.splits();
    let scores: Vec<(Hyper, f64)> = grid
        .candidates()
        .into_par_iter()
        .map(|h| {
            let mut total = 0.0;
            for (f, (tr, te)) in splits.iter().enumerate() {
                let xt: Vec<Vec<f64>> = tr.iter().map(|&i| x[i].clone()).collect();
                let yt: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
                let forest = QuantileForest::fit(
                    &xt,
                    &yt,
                    feature_names,
                    h,
                    derive_seed(seed, "tune-forest", &[f as u64]),
                )?;
                let ye: Vec<f64> = te.iter().map(|&i| y[i]).collect();
                total += match objective {
                    TuneObjective::Pinball { tau } => {
                        let pred: Vec<f64> = te
                            .iter()
                            .map(|&i| forest.predict_quantile_unchecked(&x[i], tau.get(), QuantileInterp::Lower))
                            .collect();
                        pinball_between(&ye, &pred, tau)
                    }
                    TuneObjective::Mse => {
                        let pred: Vec<f64> = te.iter().map(|&i| forest.predict_mean_unchecked(&x[i])).collect();
                        mse(&ye, &pred)
                    }
                };
            }
            Ok((h, total / splits.len() as f64))
        })
        .collect::<Result<_>>()?;
    let (best, best_score) = scores
        .iter()
        .copied()
        .reduce(|a, b| {
            let tol = 1e-12 * (1.0 + a.1.abs());
            let key = |h: &Hyper| (h.n_estimators, depth_key(h.max_depth), h.max_features);
            if b.1 < a.1 - tol || ((b.1 - a.1).abs() <= tol && key(&b.0) < key(&a.0)) {
                b
            } else {
                a
            }
        })
        .expect("grid is non-empty");
    Ok(TuneResult {
        best,
        best_score,
        scores,
    })
}
