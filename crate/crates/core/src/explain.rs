//! Interventional Shapley values, ICE curves and partial dependence.
//!
//! Exact Shapley values are computed one background row at a time: with `x`
//! and a background row `b` fixed, a feature can only matter if some tree
//! routes `x` and `b` differently on it, so every other feature is a null
//! player and the enumeration runs over the remaining ones only. Averaging the
//! per-row attributions gives the attributions of the averaged game.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{Node, PredictionTarget, QuantileForest, QuantileInterp};
use crate::metrics::CDF_EPS;
use crate::rng::{derive_seed, SplitMix64};

/// Largest feature count accepted by [`shap_exact`].
pub const MAX_EXACT_FEATURES: usize = 20;

/// Anything that maps a feature row to a scalar.
pub trait Model: Sync {
    fn n_features(&self) -> usize;

    fn predict(&self, x: &[f64]) -> f64;

    fn describe(&self) -> String {
        "model".into()
    }

    /// Coalition evaluator for the pair `(x, b)`.
    fn hybrid<'a>(&'a self, x: &'a [f64], b: &'a [f64]) -> Box<dyn Hybrid + 'a> {
        Box::new(GenericHybrid::new(self, x, b))
    }
}

/// Value function of the game "take `x` on a coalition, `b` elsewhere".
pub trait Hybrid {
    /// Features that can change the value; bit `k` of a mask refers to `players()[k]`.
    fn players(&self) -> &[usize];

    fn value(&mut self, mask: u64) -> f64;

    /// Values of all `2^d` coalitions, indexed by mask.
    fn all_values(&mut self) -> Vec<f64> {
        let d = self.players().len();
        (0..1u64 << d).map(|m| self.value(m)).collect()
    }
}

struct GenericHybrid<'a, M: Model + ?Sized> {
    model: &'a M,
    x: &'a [f64],
    players: Vec<usize>,
    z: Vec<f64>,
}

impl<'a, M: Model + ?Sized> GenericHybrid<'a, M> {
    fn new(model: &'a M, x: &'a [f64], b: &'a [f64]) -> Self {
        let players = (0..x.len()).filter(|&j| x[j] != b[j]).collect();
        Self {
            model,
            x,
            players,
            z: b.to_vec(),
        }
    }
}

impl<M: Model + ?Sized> Hybrid for GenericHybrid<'_, M> {
    fn players(&self) -> &[usize] {
        &self.players
    }

    fn value(&mut self, mask: u64) -> f64 {
        let mut z = self.z.clone();
        for (k, &j) in self.players.iter().enumerate() {
            if mask >> k & 1 == 1 {
                z[j] = self.x[j];
            }
        }
        self.model.predict(&z)
    }
}

/// Closure-backed model.
pub struct FnModel<F> {
    pub p: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for FnModel<F> {
    fn n_features(&self) -> usize {
        self.p
    }

    fn predict(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// A fitted forest together with the prediction it is explained through.
pub struct ForestModel<'a> {
    pub forest: &'a QuantileForest,
    pub target: PredictionTarget,
}

impl<'a> ForestModel<'a> {
    pub fn new(forest: &'a QuantileForest, target: PredictionTarget) -> Self {
        Self { forest, target }
    }
}

impl Model for ForestModel<'_> {
    fn n_features(&self) -> usize {
        self.forest.n_features()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        match self.target {
            PredictionTarget::Mean => self.forest.predict_mean_unchecked(x),
            PredictionTarget::Quantile { tau, interp } => self.forest.predict_quantile_unchecked(x, tau.get(), interp),
        }
    }

    fn describe(&self) -> String {
        match self.target {
            PredictionTarget::Mean => "mean".into(),
            PredictionTarget::Quantile { tau, .. } => format!("quantile {}", tau.get()),
        }
    }

    fn hybrid<'b>(&'b self, x: &'b [f64], b: &'b [f64]) -> Box<dyn Hybrid + 'b> {
        Box::new(ForestHybrid::new(self, x, b))
    }
}

// ---------------------------------------------------------------------------
// Forest coalition evaluator
// ---------------------------------------------------------------------------

/// Reduced tree over the splits where `x` and `b` disagree.
#[derive(Debug, Clone, Copy)]
enum Mini {
    Branch { bit: u32, x_side: u32, b_side: u32 },
    Leaf(u32),
}

/// Fixed-point scale for leaf weights; weights are `count / (leaf size * trees)`
/// so scaling by a power of two is exact and sums never drift.
const SCALE: f64 = 1267650600228229401496703205376.0; // 2^100

struct ForestHybrid<'a> {
    model: &'a ForestModel<'a>,
    players: Vec<usize>,
    /// (tree index, reduced tree) for trees whose leaf depends on the coalition.
    variable: Vec<(usize, Vec<Mini>)>,
    base_fixed: Vec<u128>,
    base_mean: f64,
}

fn reduce(nodes: &[Node], k: usize, x: &[f64], b: &[f64], out: &mut Vec<Mini>, used: &mut Vec<usize>) -> u32 {
    match &nodes[k] {
        Node::Leaf { .. } => {
            out.push(Mini::Leaf(k as u32));
            (out.len() - 1) as u32
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let gx = x[*feature] <= *threshold;
            let gb = b[*feature] <= *threshold;
            let pick = |g: bool| if g { *left } else { *right };
            if gx == gb {
                return reduce(nodes, pick(gx), x, b, out, used);
            }
            let id = out.len();
            out.push(Mini::Leaf(0));
            let xs = reduce(nodes, pick(gx), x, b, out, used);
            let bs = reduce(nodes, pick(gb), x, b, out, used);
            used.push(*feature);
            // bit is patched to the local player index once all players are known
            out[id] = Mini::Branch {
                bit: *feature as u32,
                x_side: xs,
                b_side: bs,
            };
            id as u32
        }
    }
}

fn walk(mini: &[Mini], mask: u64) -> u32 {
    let mut k = 0usize;
    loop {
        match mini[k] {
            Mini::Branch { bit, x_side, b_side } => {
                k = if mask >> bit & 1 == 1 { x_side } else { b_side } as usize;
            }
            Mini::Leaf(node) => return node,
        }
    }
}

impl<'a> ForestHybrid<'a> {
    fn new(model: &'a ForestModel<'a>, x: &[f64], b: &[f64]) -> Self {
        let f = model.forest;
        let mut used = Vec::new();
        let mut variable = Vec::new();
        let mut constant_leaves = Vec::new();
        for (t, tree) in f.trees().iter().enumerate() {
            let mut mini = Vec::new();
            reduce(tree.nodes(), 0, x, b, &mut mini, &mut used);
            match mini[0] {
                Mini::Leaf(node) => constant_leaves.push((t, node as usize)),
                Mini::Branch { .. } => variable.push((t, mini)),
            }
        }
        used.sort_unstable();
        used.dedup();
        let mut local = vec![u32::MAX; x.len()];
        for (k, &j) in used.iter().enumerate() {
            local[j] = k as u32;
        }
        for (_, mini) in &mut variable {
            for m in mini.iter_mut() {
                if let Mini::Branch { bit, .. } = m {
                    *bit = local[*bit as usize];
                }
            }
        }
        let mut base_fixed = vec![0u128; f.slot_targets().len()];
        let mut base_mean = 0.0;
        for &(t, node) in &constant_leaves {
            for &(s, w) in f.leaf_weight_list(t, node) {
                base_fixed[s as usize] += (w * SCALE) as u128;
            }
            base_mean += f.leaf_mean(t, node);
        }
        Self {
            model,
            players: used,
            variable,
            base_fixed,
            base_mean,
        }
    }

    fn invert_fixed(&self, acc: &[u128], tau: f64, interp: QuantileInterp) -> f64 {
        let targets = self.model.forest.slot_targets();
        let thr = ((tau - CDF_EPS) * SCALE).max(0.0) as u128;
        let mut cum: u128 = 0;
        let mut prev: Option<(f64, f64)> = None;
        let mut last = 0;
        for (s, &w) in acc.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let before = cum;
            cum += w;
            last = s;
            if cum >= thr {
                let y = targets[s];
                let (c, bf) = (cum as f64 / SCALE, before as f64 / SCALE);
                return match (interp, prev) {
                    (QuantileInterp::Linear, Some((py, pc))) if c - tau > CDF_EPS => {
                        py + (tau - pc) / (c - bf).max(f64::MIN_POSITIVE) * (y - py)
                    }
                    _ => y,
                };
            }
            prev = Some((targets[s], cum as f64 / SCALE));
        }
        targets[last]
    }

    fn add_leaf(&self, acc: &mut [u128], t: usize, node: usize) {
        for &(s, w) in self.model.forest.leaf_weight_list(t, node) {
            acc[s as usize] += (w * SCALE) as u128;
        }
    }

    fn sub_leaf(&self, acc: &mut [u128], t: usize, node: usize) {
        for &(s, w) in self.model.forest.leaf_weight_list(t, node) {
            acc[s as usize] -= (w * SCALE) as u128;
        }
    }
}

impl Hybrid for ForestHybrid<'_> {
    fn players(&self) -> &[usize] {
        &self.players
    }

    fn value(&mut self, mask: u64) -> f64 {
        let f = self.model.forest;
        match self.model.target {
            PredictionTarget::Mean => {
                let mut s = self.base_mean;
                for (t, mini) in &self.variable {
                    s += f.leaf_mean(*t, walk(mini, mask) as usize);
                }
                s / f.trees().len() as f64
            }
            PredictionTarget::Quantile { tau, interp } => {
                let mut acc = self.base_fixed.clone();
                for (t, mini) in &self.variable {
                    self.add_leaf(&mut acc, *t, walk(mini, mask) as usize);
                }
                self.invert_fixed(&acc, tau.get(), interp)
            }
        }
    }

    /// Gray-code sweep: each step flips one player and only revisits the trees that use it.
    fn all_values(&mut self) -> Vec<f64> {
        let PredictionTarget::Quantile { tau, interp } = self.model.target else {
            let d = self.players.len();
            return (0..1u64 << d).map(|m| self.value(m)).collect();
        };
        let d = self.players.len();
        let mut by_player: Vec<Vec<usize>> = vec![Vec::new(); d];
        for (v, (_, mini)) in self.variable.iter().enumerate() {
            let mut bits: Vec<u32> = mini
                .iter()
                .filter_map(|m| match m {
                    Mini::Branch { bit, .. } => Some(*bit),
                    Mini::Leaf(_) => None,
                })
                .collect();
            bits.sort_unstable();
            bits.dedup();
            for b in bits {
                by_player[b as usize].push(v);
            }
        }
        let mut acc = self.base_fixed.clone();
        let mut current: Vec<u32> = Vec::with_capacity(self.variable.len());
        for (t, mini) in &self.variable {
            let leaf = walk(mini, 0);
            self.add_leaf(&mut acc, *t, leaf as usize);
            current.push(leaf);
        }
        let mut out = vec![0.0; 1usize << d];
        out[0] = self.invert_fixed(&acc, tau.get(), interp);
        let mut mask = 0u64;
        for k in 1..1u64 << d {
            let bit = k.trailing_zeros() as usize;
            mask ^= 1 << bit;
            for &v in &by_player[bit] {
                let (t, mini) = &self.variable[v];
                let leaf = walk(mini, mask);
                if leaf != current[v] {
                    self.sub_leaf(&mut acc, *t, current[v] as usize);
                    self.add_leaf(&mut acc, *t, leaf as usize);
                    current[v] = leaf;
                }
            }
            out[mask as usize] = self.invert_fixed(&acc, tau.get(), interp);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Shapley values
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapValues {
    pub phi: Vec<f64>,
    pub base: f64,
    pub prediction: f64,
}

impl ShapValues {
    /// `|base + sum(phi) - prediction|`.
    pub fn additivity_gap(&self) -> f64 {
        (self.base + self.phi.iter().sum::<f64>() - self.prediction).abs()
    }
}

fn check_background<M: Model + ?Sized>(model: &M, x: &[f64], background: &[Vec<f64>]) -> Result<()> {
    let p = model.n_features();
    if background.is_empty() {
        return Err(Error::InvalidArgument("background set is empty".into()));
    }
    if x.len() != p || background.iter().any(|b| b.len() != p) {
        return Err(Error::InvalidArgument(format!("rows must have {p} features")));
    }
    Ok(())
}

/// Shapley weights `k! (d - k - 1)! / d!` for `k = 0..d`.
fn shapley_weights(d: usize) -> Vec<f64> {
    // 1 / (d * C(d - 1, k))
    let mut c = 1.0;
    let mut w = Vec::with_capacity(d);
    for k in 0..d {
        w.push(1.0 / (d as f64 * c));
        c = c * (d - 1 - k) as f64 / (k + 1) as f64;
    }
    w
}

/// Shapley values of a game given by its value on every coalition mask.
fn shapley_from_values(values: &[f64], d: usize) -> Vec<f64> {
    let w = shapley_weights(d);
    let mut phi = vec![0.0; d];
    for t in 0..values.len() {
        let k = (t as u64).count_ones() as usize;
        if k == d {
            continue;
        }
        let wk = w[k];
        for (i, ph) in phi.iter_mut().enumerate() {
            if t >> i & 1 == 0 {
                *ph += wk * (values[t | 1 << i] - values[t]);
            }
        }
    }
    phi
}

/// Exact interventional Shapley values of `model` at `x` over `background`.
pub fn shap_exact<M: Model + ?Sized>(model: &M, x: &[f64], background: &[Vec<f64>]) -> Result<ShapValues> {
    let p = model.n_features();
    if p > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            p,
            max: MAX_EXACT_FEATURES,
        });
    }
    check_background(model, x, background)?;
    let per_b: Vec<(Vec<f64>, f64)> = background
        .par_iter()
        .map(|b| {
            let mut h = model.hybrid(x, b);
            let players = h.players().to_vec();
            let values = h.all_values();
            let local = shapley_from_values(&values, players.len());
            let mut phi = vec![0.0; p];
            for (k, &j) in players.iter().enumerate() {
                phi[j] = local[k];
            }
            (phi, values[0])
        })
        .collect();
    let m = background.len() as f64;
    let mut phi = vec![0.0; p];
    let mut base = 0.0;
    for (ph, v0) in &per_b {
        for (a, b) in phi.iter_mut().zip(ph) {
            *a += b;
        }
        base += v0;
    }
    for a in &mut phi {
        *a /= m;
    }
    Ok(ShapValues {
        phi,
        base: base / m,
        prediction: model.predict(x),
    })
}

/// Antithetic permutation estimate: each sampled order is walked forwards and backwards.
pub fn shap_sampled<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    background: &[Vec<f64>],
    permutations: usize,
    seed: u64,
) -> Result<ShapValues> {
    check_background(model, x, background)?;
    if permutations == 0 {
        return Err(Error::InvalidArgument("permutations must be at least 1".into()));
    }
    let p = model.n_features();
    let value = |take: &[bool]| -> f64 {
        background
            .iter()
            .map(|b| {
                let z: Vec<f64> = (0..p).map(|j| if take[j] { x[j] } else { b[j] }).collect();
                model.predict(&z)
            })
            .sum::<f64>()
            / background.len() as f64
    };
    let base = value(&vec![false; p]);
    let full = value(&vec![true; p]);
    let runs: Vec<Vec<f64>> = (0..permutations)
        .into_par_iter()
        .map(|k| {
            let mut g = SplitMix64::for_purpose(seed, "shap-perm", &[k as u64]);
            let mut order: Vec<usize> = (0..p).collect();
            g.shuffle(&mut order);
            let mut phi = vec![0.0; p];
            for ord in [order.clone(), order.into_iter().rev().collect::<Vec<_>>()] {
                let mut take = vec![false; p];
                let mut prev = base;
                for (step, &j) in ord.iter().enumerate() {
                    take[j] = true;
                    let v = if step + 1 == p { full } else { value(&take) };
                    phi[j] += v - prev;
                    prev = v;
                }
            }
            phi
        })
        .collect();
    let mut phi = vec![0.0; p];
    for r in &runs {
        for (a, b) in phi.iter_mut().zip(r) {
            *a += b;
        }
    }
    let denom = 2.0 * permutations as f64;
    for a in &mut phi {
        *a /= denom;
    }
    Ok(ShapValues {
        phi,
        base,
        prediction: model.predict(x),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapReport {
    pub feature_names: Vec<String>,
    pub mode: ShapMode,
    pub target: String,
    pub base_value: f64,
    pub background_rows: usize,
    /// One row per explained sample.
    pub phi: Vec<Vec<f64>>,
    pub predictions: Vec<f64>,
    pub mean_abs: Vec<f64>,
    /// Feature indices by decreasing mean |phi|; ties keep index order.
    pub ranking: Vec<usize>,
}

impl ShapReport {
    pub fn top(&self, k: usize) -> Vec<&str> {
        self.ranking.iter().take(k).map(|&j| self.feature_names[j].as_str()).collect()
    }

    pub fn max_additivity_gap(&self) -> f64 {
        self.phi
            .iter()
            .zip(&self.predictions)
            .map(|(ph, f)| (self.base_value + ph.iter().sum::<f64>() - f).abs())
            .fold(0.0, f64::max)
    }

    /// Long-format table: feature, sample, phi, feature value.
    pub fn write_beeswarm_csv<W: Write>(&self, x: &[Vec<f64>], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "sample", "phi", "value"])?;
        for &j in &self.ranking {
            for (i, ph) in self.phi.iter().enumerate() {
                w.write_record([
                    self.feature_names[j].clone(),
                    i.to_string(),
                    format!("{}", ph[j]),
                    format!("{}", x[i][j]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn rank_by(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Shapley values for every row of `x`, with the mean-|phi| ranking.
pub fn shap_global<M: Model + ?Sized>(
    model: &M,
    feature_names: &[String],
    x: &[Vec<f64>],
    background: &[Vec<f64>],
    mode: ShapMode,
    seed: u64,
) -> Result<ShapReport> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("no rows to explain".into()));
    }
    if feature_names.len() != model.n_features() {
        return Err(Error::InvalidArgument("feature names do not match the model".into()));
    }
    let rows: Vec<ShapValues> = x
        .par_iter()
        .enumerate()
        .map(|(i, row)| match mode {
            ShapMode::Exact => shap_exact(model, row, background),
            ShapMode::Sampled => shap_sampled(model, row, background, 256, derive_seed(seed, "shap-row", &[i as u64])),
        })
        .collect::<Result<_>>()?;
    let p = model.n_features();
    let n = rows.len() as f64;
    let mean_abs: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r.phi[j].abs()).sum::<f64>() / n).collect();
    Ok(ShapReport {
        feature_names: feature_names.to_vec(),
        mode,
        target: model.describe(),
        base_value: rows[0].base,
        background_rows: background.len(),
        predictions: rows.iter().map(|r| r.prediction).collect(),
        phi: rows.into_iter().map(|r| r.phi).collect(),
        ranking: rank_by(&mean_abs),
        mean_abs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waterfall {
    pub base: f64,
    pub prediction: f64,
    /// (feature, phi) by decreasing |phi|.
    pub contributions: Vec<(String, f64)>,
}

pub fn shap_individual<M: Model + ?Sized>(
    model: &M,
    feature_names: &[String],
    x: &[f64],
    background: &[Vec<f64>],
) -> Result<Waterfall> {
    let s = shap_exact(model, x, background)?;
    let abs: Vec<f64> = s.phi.iter().map(|v| v.abs()).collect();
    Ok(Waterfall {
        base: s.base,
        prediction: s.prediction,
        contributions: rank_by(&abs).into_iter().map(|j| (feature_names[j].clone(), s.phi[j])).collect(),
    })
}

// ---------------------------------------------------------------------------
// ICE / PDP
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceGrid {
    pub feature: usize,
    pub feature_name: String,
    pub grid: Vec<f64>,
    /// `curves[i][g]`: prediction for row `i` with the feature set to `grid[g]`.
    pub curves: Vec<Vec<f64>>,
    pub pdp: Vec<f64>,
    /// `(x_i, f(x_i))` for every row.
    pub markers: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl IceGrid {
    /// Columns: grid, pdp, then one per sample.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![self.feature_name.clone(), "pdp".into()];
        header.extend((0..self.curves.len()).map(|i| format!("ice_{i}")));
        w.write_record(&header)?;
        for (g, v) in self.grid.iter().enumerate() {
            let mut rec = vec![format!("{v}"), format!("{}", self.pdp[g])];
            rec.extend(self.curves.iter().map(|c| format!("{}", c[g])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` equispaced points over the observed range of column `j`.
pub fn feature_grid(x: &[Vec<f64>], j: usize, count: usize) -> (Vec<f64>, Option<String>) {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r[j]), b.max(r[j])));
    if lo == hi || count <= 1 {
        return (vec![lo], (lo == hi).then(|| format!("feature {j} is constant; grid has one point")));
    }
    let grid = (0..count)
        .map(|k| if k + 1 == count { hi } else { lo + (hi - lo) * k as f64 / (count - 1) as f64 })
        .collect();
    (grid, None)
}

fn check_rows<M: Model + ?Sized>(model: &M, x: &[Vec<f64>], features: &[usize]) -> Result<()> {
    let p = model.n_features();
    if x.is_empty() {
        return Err(Error::InvalidArgument("no rows".into()));
    }
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidArgument(format!("rows must have {p} features")));
    }
    if let Some(&j) = features.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidArgument(format!("feature index {j} out of range")));
    }
    Ok(())
}

pub fn ice_1d<M: Model + ?Sized>(model: &M, feature_names: &[String], x: &[Vec<f64>], feature: usize, grid_size: usize) -> Result<IceGrid> {
    check_rows(model, x, &[feature])?;
    let (grid, warn) = feature_grid(x, feature, grid_size);
    let curves: Vec<Vec<f64>> = x
        .par_iter()
        .map(|row| {
            let mut z = row.clone();
            grid.iter()
                .map(|&g| {
                    z[feature] = g;
                    model.predict(&z)
                })
                .collect()
        })
        .collect();
    let n = curves.len() as f64;
    let pdp = (0..grid.len()).map(|g| curves.iter().map(|c| c[g]).sum::<f64>() / n).collect();
    let markers = x.iter().map(|r| (r[feature], model.predict(r))).collect();
    Ok(IceGrid {
        feature,
        feature_name: feature_names.get(feature).cloned().unwrap_or_else(|| format!("x{feature}")),
        grid,
        curves,
        pdp,
        markers,
        warnings: warn.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpSurface {
    pub features: (usize, usize),
    pub feature_names: (String, String),
    pub grid_a: Vec<f64>,
    pub grid_b: Vec<f64>,
    /// `surface[g][h]` at `(grid_a[g], grid_b[h])`.
    pub surface: Vec<Vec<f64>>,
    /// Observed `(a, b)` pairs for the scatter overlay.
    pub points: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl PdpSurface {
    /// Long format: a, b, pdp.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([self.feature_names.0.as_str(), self.feature_names.1.as_str(), "pdp"])?;
        for (g, a) in self.grid_a.iter().enumerate() {
            for (h, b) in self.grid_b.iter().enumerate() {
                w.write_record([format!("{a}"), format!("{b}"), format!("{}", self.surface[g][h])])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Mean surface value over grid cells with `a > a0` (`a_hi`) and `b > b0` (`b_hi`).
    pub fn quadrant_mean(&self, a0: f64, b0: f64, a_hi: bool, b_hi: bool) -> Option<f64> {
        let mut s = 0.0;
        let mut c = 0usize;
        for (g, a) in self.grid_a.iter().enumerate() {
            for (h, b) in self.grid_b.iter().enumerate() {
                if (*a > a0) == a_hi && (*b > b0) == b_hi {
                    s += self.surface[g][h];
                    c += 1;
                }
            }
        }
        (c > 0).then(|| s / c as f64)
    }
}

pub fn pdp_2d<M: Model + ?Sized>(
    model: &M,
    feature_names: &[String],
    x: &[Vec<f64>],
    a: usize,
    b: usize,
    grid_size: usize,
) -> Result<PdpSurface> {
    if a == b {
        return Err(Error::InvalidArgument("2-D partial dependence needs two distinct features".into()));
    }
    check_rows(model, x, &[a, b])?;
    let (grid_a, wa) = feature_grid(x, a, grid_size);
    let (grid_b, wb) = feature_grid(x, b, grid_size);
    let n = x.len() as f64;
    let surface: Vec<Vec<f64>> = grid_a
        .par_iter()
        .map(|&va| {
            grid_b
                .iter()
                .map(|&vb| {
                    x.iter()
                        .map(|row| {
                            let mut z = row.clone();
                            z[a] = va;
                            z[b] = vb;
                            model.predict(&z)
                        })
                        .sum::<f64>()
                        / n
                })
                .collect()
        })
        .collect();
    let name = |j: usize| feature_names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
    Ok(PdpSurface {
        features: (a, b),
        feature_names: (name(a), name(b)),
        grid_a,
        grid_b,
        surface,
        points: x.iter().map(|r| (r[a], r[b])).collect(),
        warnings: wa.into_iter().chain(wb).collect(),
    })
}

/// Mean finite-difference slope of a PDP over grid cells entirely below / above `at`.
pub fn pdp_slopes(grid: &[f64], pdp: &[f64], at: f64) -> (Option<f64>, Option<f64>) {
    let (mut below, mut above) = (Vec::new(), Vec::new());
    for k in 1..grid.len() {
        let s = (pdp[k] - pdp[k - 1]) / (grid[k] - grid[k - 1]);
        if grid[k] <= at {
            below.push(s);
        } else if grid[k - 1] >= at {
            above.push(s);
        }
    }
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    (mean(below), mean(above))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::Hyper;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    fn data(n: usize, p: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut g = SplitMix64::new(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| g.next_f64()).collect()).collect();
        let y = x
            .iter()
            .map(|r| 2.0 * r[0] + if r[1] > 0.5 { 1.0 } else { 0.0 } + 0.2 * g.normal())
            .collect();
        (x, y)
    }

    fn q90() -> PredictionTarget {
        PredictionTarget::quantile(0.9).unwrap()
    }

    /// Direct subset enumeration over all features with the averaged value function.
    fn brute_force<M: Model>(m: &M, x: &[f64], bg: &[Vec<f64>]) -> (Vec<f64>, f64) {
        let p = m.n_features();
        let v = |s: usize| -> f64 {
            bg.iter()
                .map(|b| {
                    let z: Vec<f64> = (0..p).map(|j| if s >> j & 1 == 1 { x[j] } else { b[j] }).collect();
                    m.predict(&z)
                })
                .sum::<f64>()
                / bg.len() as f64
        };
        let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        let mut phi = vec![0.0; p];
        for j in 0..p {
            for s in 0..1usize << p {
                if s >> j & 1 == 1 {
                    continue;
                }
                let k = s.count_ones() as usize;
                let w = fact(k) * fact(p - k - 1) / fact(p);
                phi[j] += w * (v(s | 1 << j) - v(s));
            }
        }
        (phi, v(0))
    }

    #[test]
    fn weights_sum_to_one_per_size_class() {
        for d in 1..12 {
            let w = shapley_weights(d);
            // sum over coalitions not containing i: sum_k C(d-1, k) w_k = 1
            let mut c = 1.0;
            let mut total = 0.0;
            for (k, wk) in w.iter().enumerate() {
                total += c * wk;
                c = c * (d - 1 - k) as f64 / (k + 1) as f64;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_model_attributions() {
        let m = FnModel { p: 2, f: |x: &[f64]| x[0] + x[1] };
        let bg = vec![vec![-1.0, 2.0], vec![1.0, -2.0]];
        let s = shap_exact(&m, &[3.0, -0.5], &bg).unwrap();
        assert!((s.phi[0] - 3.0).abs() < 1e-12 && (s.phi[1] + 0.5).abs() < 1e-12);
        assert_eq!(s.base, 0.0);
    }

    #[test]
    fn ignored_feature_gets_zero() {
        let m = FnModel { p: 3, f: |x: &[f64]| x[0] * x[2] };
        let bg = vec![vec![0.1, 0.2, 0.3], vec![0.7, 0.9, 0.4]];
        let s = shap_exact(&m, &[0.5, 0.5, 0.5], &bg).unwrap();
        assert_eq!(s.phi[1], 0.0);
    }

    #[test]
    fn symmetric_features_share_credit() {
        let m = FnModel { p: 3, f: |x: &[f64]| (x[0] * x[1]).max(x[2]) };
        let bg = vec![vec![0.2, 0.2, 0.1], vec![0.6, 0.6, 0.3]];
        let s = shap_exact(&m, &[0.9, 0.9, 0.5], &bg).unwrap();
        assert!((s.phi[0] - s.phi[1]).abs() < 1e-12);
    }

    #[test]
    fn forest_matches_brute_force_on_three_features() {
        let (x, y) = data(30, 3, 1);
        let f = QuantileForest::fit(&x, &y, &names(3), Hyper::new(25, Some(3), 2), 4).unwrap();
        for target in [q90(), PredictionTarget::Mean] {
            let m = ForestModel::new(&f, target);
            for row in x.iter().take(8) {
                let s = shap_exact(&m, row, &x).unwrap();
                let (phi, base) = brute_force(&m, row, &x);
                for j in 0..3 {
                    assert!((s.phi[j] - phi[j]).abs() < 1e-9, "{:?} vs {phi:?}", s.phi);
                }
                assert!((s.base - base).abs() < 1e-9);
                assert!(s.additivity_gap() <= 1e-9);
            }
        }
    }

    #[test]
    fn forest_evaluator_agrees_with_generic_path() {
        let (x, y) = data(25, 6, 2);
        let f = QuantileForest::fit(&x, &y, &names(6), Hyper::new(30, Some(4), 3), 5).unwrap();
        let m = ForestModel::new(&f, q90());
        let generic = FnModel { p: 6, f: |z: &[f64]| m.predict(z) };
        for (xi, bi) in x.iter().zip(x.iter().rev()).take(5) {
            let a = shap_exact(&m, xi, std::slice::from_ref(bi)).unwrap();
            let b = shap_exact(&generic, xi, std::slice::from_ref(bi)).unwrap();
            for j in 0..6 {
                assert!((a.phi[j] - b.phi[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn additivity_on_every_training_row() {
        let (x, y) = data(20, 8, 3);
        let f = QuantileForest::fit(&x, &y, &names(8), Hyper::new(40, Some(3), 3), 6).unwrap();
        let m = ForestModel::new(&f, q90());
        let r = shap_global(&m, &names(8), &x, &x, ShapMode::Exact, 0).unwrap();
        assert!(r.max_additivity_gap() <= 1e-9);
        for w in r.ranking.windows(2) {
            assert!(r.mean_abs[w[0]] > r.mean_abs[w[1]] || (r.mean_abs[w[0]] == r.mean_abs[w[1]] && w[0] < w[1]));
        }
    }

    #[test]
    fn too_many_features_is_rejected() {
        let m = FnModel { p: 21, f: |x: &[f64]| x[0] };
        let x = vec![0.0; 21];
        assert!(matches!(shap_exact(&m, &x, &[x.clone()]), Err(Error::TooManyFeatures { p: 21, .. })));
    }

    #[test]
    fn constant_model_has_zero_attributions() {
        let m = FnModel { p: 3, f: |_: &[f64]| 4.0 };
        let x = vec![vec![0.0, 1.0, 2.0], vec![3.0, 1.0, 0.0]];
        let r = shap_global(&m, &names(3), &x, &x, ShapMode::Exact, 0).unwrap();
        assert!(r.phi.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(r.ranking, vec![0, 1, 2]);
    }

    #[test]
    fn sampled_is_additive_reproducible_and_close() {
        let (x, y) = data(30, 5, 4);
        let f = QuantileForest::fit(&x, &y, &names(5), Hyper::new(20, Some(3), 2), 7).unwrap();
        let m = ForestModel::new(&f, PredictionTarget::Mean);
        let bg = &x[..10];
        let exact = shap_exact(&m, &x[11], bg).unwrap();
        let one_a = shap_sampled(&m, &x[11], bg, 1, 9).unwrap();
        let one_b = shap_sampled(&m, &x[11], bg, 1, 9).unwrap();
        assert_eq!(one_a, one_b);
        assert!(one_a.additivity_gap() < 1e-9);
        let many = shap_sampled(&m, &x[11], bg, 2000, 9).unwrap();
        for j in 0..5 {
            assert!((many.phi[j] - exact.phi[j]).abs() < 0.01);
        }
    }

    #[test]
    fn sampled_estimator_is_unbiased() {
        let (x, y) = data(30, 5, 5);
        let f = QuantileForest::fit(&x, &y, &names(5), Hyper::new(20, Some(3), 2), 8).unwrap();
        let m = ForestModel::new(&f, q90());
        let bg = &x[..8];
        let exact = shap_exact(&m, &x[20], bg).unwrap();
        let runs: Vec<Vec<f64>> = (0..50).map(|s| shap_sampled(&m, &x[20], bg, 4, 100 + s).unwrap().phi).collect();
        for j in 0..5 {
            let v: Vec<f64> = runs.iter().map(|r| r[j]).collect();
            let mean = v.iter().sum::<f64>() / 50.0;
            let sd = (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
            let se = sd / 50f64.sqrt();
            assert!((mean - exact.phi[j]).abs() <= 3.0 * se + 1e-12, "feature {j}");
        }
    }

    #[test]
    fn waterfall_orders_by_magnitude() {
        let m = FnModel { p: 3, f: |x: &[f64]| x[0] - 3.0 * x[1] + 0.5 * x[2] };
        let w = shap_individual(&m, &names(3), &[1.0, 1.0, 1.0], &[vec![0.0; 3]]).unwrap();
        let order: Vec<&str> = w.contributions.iter().map(|c| c.0.as_str()).collect();
        assert_eq!(order, vec!["x1", "x0", "x2"]);
        let total = w.base + w.contributions.iter().map(|c| c.1).sum::<f64>();
        assert!((total - w.prediction).abs() < 1e-12);
    }

    #[test]
    fn pdp_is_mean_of_ice() {
        let (x, y) = data(25, 3, 6);
        let f = QuantileForest::fit(&x, &y, &names(3), Hyper::new(20, Some(3), 2), 1).unwrap();
        let m = ForestModel::new(&f, q90());
        let ice = ice_1d(&m, &names(3), &x, 0, 50).unwrap();
        assert_eq!(ice.grid.len(), 50);
        assert!(ice.grid.windows(2).all(|w| w[0] < w[1]));
        for g in 0..50 {
            // summed in reverse as an independent check
            let s: f64 = ice.curves.iter().rev().map(|c| c[g]).sum::<f64>() / 25.0;
            assert!((s - ice.pdp[g]).abs() < 1e-12);
        }
    }

    #[test]
    fn ice_on_grid_matches_prediction() {
        let (x, y) = data(20, 2, 7);
        let f = QuantileForest::fit(&x, &y, &names(2), Hyper::new(10, Some(3), 1), 2).unwrap();
        let m = ForestModel::new(&f, PredictionTarget::Mean);
        let ice = ice_1d(&m, &names(2), &x, 1, 30).unwrap();
        // the rows holding the min and max lie exactly on the grid ends
        for (i, row) in x.iter().enumerate() {
            if row[1] == ice.grid[0] {
                assert_eq!(ice.curves[i][0], m.predict(row));
            }
            if row[1] == *ice.grid.last().unwrap() {
                assert_eq!(*ice.curves[i].last().unwrap(), m.predict(row));
            }
        }
    }

    #[test]
    fn ignored_feature_gives_flat_curves() {
        let m = FnModel { p: 2, f: |x: &[f64]| x[0] * 2.0 };
        let x = vec![vec![0.0, 1.0], vec![1.0, 3.0], vec![2.0, 2.0]];
        let ice = ice_1d(&m, &names(2), &x, 1, 10).unwrap();
        for c in &ice.curves {
            assert!(c.iter().all(|&v| v == c[0]));
        }
        let flat = FnModel { p: 2, f: |_: &[f64]| 1.0 };
        let s = pdp_2d(&flat, &names(2), &x, 0, 1, 5).unwrap();
        assert!(s.surface.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_feature_gives_single_point() {
        let m = FnModel { p: 2, f: |x: &[f64]| x[0] };
        let x = vec![vec![1.0, 5.0], vec![2.0, 5.0]];
        let ice = ice_1d(&m, &names(2), &x, 1, 50).unwrap();
        assert_eq!(ice.grid, vec![5.0]);
        assert_eq!(ice.warnings.len(), 1);
    }

    #[test]
    fn separable_surface_is_outer_sum() {
        let m = FnModel { p: 3, f: |x: &[f64]| x[0].powi(2) + (3.0 * x[1]).sin() + x[2] };
        let (x, _) = data(15, 3, 8);
        let s = pdp_2d(&m, &names(3), &x, 0, 1, 7).unwrap();
        let ia = ice_1d(&m, &names(3), &x, 0, 7).unwrap();
        let ib = ice_1d(&m, &names(3), &x, 1, 7).unwrap();
        // f = g(a) + h(b) + c: surface[g][h] = pdp_a[g] + pdp_b[h] - mean prediction
        let mean_f = x.iter().map(|r| m.predict(r)).sum::<f64>() / 15.0;
        for g in 0..7 {
            for h in 0..7 {
                let expect = ia.pdp[g] + ib.pdp[h] - mean_f;
                assert!((s.surface[g][h] - expect).abs() < 1e-12);
            }
        }
        assert!(pdp_2d(&m, &names(3), &x, 1, 1, 7).is_err());
    }

    #[test]
    fn slopes_split_at_threshold() {
        let grid: Vec<f64> = (0..11).map(f64::from).collect();
        let pdp: Vec<f64> = grid.iter().map(|&g| if g < 5.0 { 2.0 * g } else { 10.0 + 0.5 * (g - 5.0) }).collect();
        let (lo, hi) = pdp_slopes(&grid, &pdp, 5.0);
        assert_eq!((lo, hi), (Some(2.0), Some(0.5)));
    }
}
