//! L1-penalized linear regression under pinball or squared loss, plus the
//! cross-validated regularization path used for feature selection.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::make_folds;
use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::metrics::{check_loss, lower_quantile, mse, QuantileLevel};
use crate::rng::{derive_seed, SplitMix64};

/// Coefficients below this magnitude count as zero.
pub const NONZERO_EPS: f64 = 1e-8;

const SMOOTHING: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Pinball,
    Squared,
}

/// Per-feature centering and scaling (population SD; constant columns map to 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let n = x.len() as f64;
        let p = x.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; p];
        let mut scale = vec![1.0; p];
        let mut constant = vec![false; p];
        for j in 0..p {
            let m = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            if x.iter().all(|r| r[j] == x[0][j]) || var.sqrt() <= 1e-12 * (1.0 + m.abs()) {
                constant[j] = true;
            } else {
                scale[j] = var.sqrt();
            }
        }
        Self { mean, scale, constant }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            mean: vec![0.0; p],
            scale: vec![1.0; p],
            constant: vec![false; p],
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.constant[j] {
                    0.0
                } else {
                    (v - self.mean[j]) / self.scale[j]
                }
            })
            .collect()
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Fitted sparse linear model; coefficients live on the standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQuantileModel {
    pub loss: Loss,
    /// `None` for squared loss.
    pub tau: Option<QuantileLevel>,
    pub lambda: f64,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub l1_norm: f64,
    pub standardization: Standardizer,
}

impl LinearQuantileModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let z = self.standardization.transform_row(x);
        self.beta0 + z.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_rows(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    /// Intercept and slopes in the original feature units.
    pub fn unstandardized(&self) -> (f64, Vec<f64>) {
        let s = &self.standardization;
        let mut b0 = self.beta0;
        let mut beta = vec![0.0; self.beta.len()];
        for j in 0..self.beta.len() {
            if s.constant[j] {
                continue;
            }
            beta[j] = self.beta[j] / s.scale[j];
            b0 -= beta[j] * s.mean[j];
        }
        (b0, beta)
    }

    pub fn nonzero(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j].abs() > NONZERO_EPS).collect()
    }

    /// Penalized training objective (exact, unsmoothed loss).
    pub fn objective(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        let pred = self.predict_rows(x);
        let n = y.len() as f64;
        let data = match (self.loss, self.tau) {
            (Loss::Pinball, Some(t)) => {
                y.iter().zip(&pred).map(|(a, b)| check_loss(a - b, t.get())).sum::<f64>() / n
            }
            _ => y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * n),
        };
        data + self.lambda * self.l1_norm
    }
}

/// How the pinball problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PinballSolver {
    /// Exact linear program (simplex).
    #[default]
    Lp,
    /// Smoothed coordinate descent with annealing and random restarts.
    Cd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Options {
    pub standardize: bool,
    pub solver: PinballSolver,
    /// Total number of starts for the pinball solver (the first from zero or a warm start).
    pub restarts: usize,
    pub max_sweeps: usize,
}

impl Default for L1Options {
    fn default() -> Self {
        Self {
            standardize: true,
            solver: PinballSolver::Lp,
            restarts: 5,
            max_sweeps: 2000,
        }
    }
}

fn check_inputs(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty X and y, got {} rows and {} targets",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidArgument("ragged design matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in X or y".into()));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("lambda must be a finite value >= 0, got {lambda}")));
    }
    Ok(p)
}

fn columns(z: &[Vec<f64>], p: usize) -> Vec<Vec<f64>> {
    (0..p).map(|j| z.iter().map(|r| r[j]).collect()).collect()
}

// ---------------------------------------------------------------------------
// Pinball solver
// ---------------------------------------------------------------------------

/// Derivative of the smoothed check function `(h_eps(u) + (2 tau - 1) u) / 2`.
#[inline]
fn smooth_grad(u: f64, tau: f64, eps: f64) -> f64 {
    0.5 * ((u / eps).clamp(-1.0, 1.0) + 2.0 * tau - 1.0)
}

/// `d/db (1/n) sum rho_eps(r_i - z_i b)`; nondecreasing and piecewise linear in `b`.
fn coord_grad(r: &[f64], z: &[f64], b: f64, tau: f64, eps: f64) -> f64 {
    let mut s = 0.0;
    for (&ri, &zi) in r.iter().zip(z) {
        if zi != 0.0 {
            s += zi * smooth_grad(ri - zi * b, tau, eps);
        }
    }
    -s / r.len() as f64
}

/// Exact minimizer over `b` of `(1/n) sum rho_eps(r_i - z_i b) + lambda |b|`.
///
/// The derivative is piecewise linear with kinks at `(r_i +- eps) / z_i`, so
/// a binary search over the kinks followed by one interpolation is exact.
fn solve_coordinate(r: &[f64], z: &[f64], tau: f64, eps: f64, lambda: f64, kinks: &mut Vec<f64>) -> f64 {
    let g0 = coord_grad(r, z, 0.0, tau, eps);
    let (target, positive) = if lambda > 0.0 {
        if g0.abs() <= lambda {
            return 0.0;
        }
        if g0 < -lambda {
            (-lambda, true)
        } else {
            (lambda, false)
        }
    } else if g0 == 0.0 {
        return 0.0;
    } else {
        (0.0, g0 < 0.0)
    };
    kinks.clear();
    for (&ri, &zi) in r.iter().zip(z) {
        if zi != 0.0 {
            for k in [(ri - eps) / zi, (ri + eps) / zi] {
                if (positive && k > 0.0) || (!positive && k < 0.0) {
                    kinks.push(k);
                }
            }
        }
    }
    kinks.push(0.0);
    kinks.sort_by(f64::total_cmp);
    if positive {
        let last = *kinks.last().unwrap();
        kinks.push(last + 1.0);
    } else {
        let first = kinks[0];
        kinks.insert(0, first - 1.0);
    }
    // first kink with grad >= target
    let (mut lo, mut hi) = (0usize, kinks.len() - 1);
    if coord_grad(r, z, kinks[hi], tau, eps) < target {
        return kinks[hi];
    }
    if coord_grad(r, z, kinks[lo], tau, eps) >= target {
        return kinks[lo];
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if coord_grad(r, z, kinks[mid], tau, eps) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (a, b) = (kinks[lo], kinks[hi]);
    let (ga, gb) = (coord_grad(r, z, a, tau, eps), coord_grad(r, z, b, tau, eps));
    if gb - ga <= 0.0 {
        return b;
    }
    a + (target - ga) * (b - a) / (gb - ga)
}

/// Smoothed-pinball coordinate descent from `beta`, annealing the smoothing width.
fn pinball_cd(cols: &[Vec<f64>], y: &[f64], tau: f64, lambda: f64, mut beta: Vec<f64>, max_sweeps: usize) -> (f64, Vec<f64>) {
    let n = y.len();
    let ones = vec![1.0; n];
    let mut r: Vec<f64> = y.to_vec();
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            r[i] -= c[i] * beta[j];
        }
    }
    let mut b0 = lower_quantile(&r, tau);
    for v in &mut r {
        *v -= b0;
    }
    let mut kinks = Vec::with_capacity(2 * n + 2);
    let active: Vec<bool> = cols.iter().map(|c| c.iter().any(|&v| v != 0.0)).collect();
    for &eps in &SMOOTHING {
        for _ in 0..max_sweeps {
            let mut delta: f64 = 0.0;
            for v in &mut r {
                *v += b0;
            }
            let nb0 = solve_coordinate(&r, &ones, tau, eps, 0.0, &mut kinks);
            for v in &mut r {
                *v -= nb0;
            }
            delta = delta.max((nb0 - b0).abs());
            b0 = nb0;
            for (j, c) in cols.iter().enumerate() {
                if !active[j] {
                    continue;
                }
                let old = beta[j];
                for i in 0..n {
                    r[i] += c[i] * old;
                }
                let nb = solve_coordinate(&r, c, tau, eps, lambda, &mut kinks);
                for i in 0..n {
                    r[i] -= c[i] * nb;
                }
                delta = delta.max((nb - old).abs());
                beta[j] = nb;
            }
            let size = beta.iter().fold(b0.abs(), |m, b| m.max(b.abs()));
            if delta <= 1e-10 * (1.0 + size) {
                break;
            }
        }
    }
    // exact intercept for the unsmoothed loss
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - cols.iter().zip(&beta).map(|(c, b)| c[i] * b).sum::<f64>())
        .collect();
    (lower_quantile(&resid, tau), beta)
}

/// min (1/n) sum(tau u + (1 - tau) v) + lambda sum(b+ + b-)
/// s.t. y = b0 + X (b+ - b-) + u - v, with u, v, b+, b- >= 0.
fn pinball_lp(cols: &[Vec<f64>], y: &[f64], tau: f64, lambda: f64) -> Result<(f64, Vec<f64>)> {
    use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
    let n = y.len();
    let w = 1.0 / n as f64;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let b0 = lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY));
    let signed: Vec<_> = cols
        .iter()
        .map(|c| {
            let used = c.iter().any(|&v| v != 0.0);
            let hi = if used { f64::INFINITY } else { 0.0 };
            (lp.add_var(lambda, (0.0, hi)), lp.add_var(lambda, (0.0, hi)))
        })
        .collect();
    for i in 0..n {
        let u = lp.add_var(tau * w, (0.0, f64::INFINITY));
        let v = lp.add_var((1.0 - tau) * w, (0.0, f64::INFINITY));
        let mut e = LinearExpr::empty();
        e.add(b0, 1.0);
        for (c, &(bp, bm)) in cols.iter().zip(&signed) {
            if c[i] != 0.0 {
                e.add(bp, c[i]);
                e.add(bm, -c[i]);
            }
        }
        e.add(u, 1.0);
        e.add(v, -1.0);
        lp.add_constraint(e, ComparisonOp::Eq, y[i]);
    }
    let sol = lp.solve().map_err(|e| Error::Model(format!("pinball LP failed: {e}")))?;
    let beta: Vec<f64> = signed
        .iter()
        .map(|&(bp, bm)| {
            let b = sol[bp] - sol[bm];
            if b.abs() <= 1e-12 { 0.0 } else { b }
        })
        .collect();
    // exact intercept for the fitted slopes
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - cols.iter().zip(&beta).map(|(c, b)| c[i] * b).sum::<f64>())
        .collect();
    Ok((lower_quantile(&resid, tau), beta))
}

fn pinball_objective(cols: &[Vec<f64>], y: &[f64], tau: f64, lambda: f64, b0: f64, beta: &[f64]) -> f64 {
    let n = y.len();
    let loss: f64 = (0..n)
        .map(|i| {
            let f = b0 + cols.iter().zip(beta).map(|(c, b)| c[i] * b).sum::<f64>();
            check_loss(y[i] - f, tau)
        })
        .sum::<f64>()
        / n as f64;
    loss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// L1-penalized linear quantile regression.
pub fn fit_l1_pinball(x: &[Vec<f64>], y: &[f64], tau: QuantileLevel, lambda: f64, seed: u64) -> Result<LinearQuantileModel> {
    fit_l1_pinball_with(x, y, tau, lambda, seed, &L1Options::default(), None)
}

pub fn fit_l1_pinball_with(
    x: &[Vec<f64>],
    y: &[f64],
    tau: QuantileLevel,
    lambda: f64,
    seed: u64,
    opts: &L1Options,
    warm: Option<&[f64]>,
) -> Result<LinearQuantileModel> {
    let p = check_inputs(x, y, lambda)?;
    let std = if opts.standardize {
        Standardizer::fit(x)
    } else {
        Standardizer::identity(p)
    };
    let cols = columns(&std.transform(x), p);
    let t = tau.get();
    if opts.solver == PinballSolver::Lp {
        let (beta0, beta) = pinball_lp(&cols, y, t, lambda)?;
        return Ok(LinearQuantileModel {
            loss: Loss::Pinball,
            tau: Some(tau),
            lambda,
            beta0,
            l1_norm: beta.iter().map(|b| b.abs()).sum(),
            beta,
            standardization: std,
        });
    }
    let start = warm.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    let mut best = pinball_cd(&cols, y, t, lambda, start, opts.max_sweeps);
    let mut best_obj = pinball_objective(&cols, y, t, lambda, best.0, &best.1);
    let spread = {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64).sqrt().max(1e-3)
    };
    for k in 1..opts.restarts.max(1) {
        let mut g = SplitMix64::for_purpose(seed, "l1-restart", &[k as u64]);
        let start: Vec<f64> = (0..p).map(|_| g.normal() * spread / (p as f64).sqrt()).collect();
        let cand = pinball_cd(&cols, y, t, lambda, start, opts.max_sweeps);
        let obj = pinball_objective(&cols, y, t, lambda, cand.0, &cand.1);
        if obj < best_obj {
            best = cand;
            best_obj = obj;
        }
    }
    let (beta0, beta) = best;
    Ok(LinearQuantileModel {
        loss: Loss::Pinball,
        tau: Some(tau),
        lambda,
        beta0,
        l1_norm: beta.iter().map(|b| b.abs()).sum(),
        beta,
        standardization: std,
    })
}

/// Smallest penalty at which the all-zero slope vector is optimal for the pinball loss.
///
/// Residuals that sit exactly at the intercept contribute their worst case,
/// so this is an upper bound.
pub fn lambda_max_pinball(x: &[Vec<f64>], y: &[f64], tau: QuantileLevel, standardize: bool) -> Result<f64> {
    let p = check_inputs(x, y, 0.0)?;
    let std = if standardize { Standardizer::fit(x) } else { Standardizer::identity(p) };
    let cols = columns(&std.transform(x), p);
    let t = tau.get();
    let q = lower_quantile(y, t);
    let n = y.len() as f64;
    let worst = t.max(1.0 - t);
    Ok(cols
        .iter()
        .map(|c| {
            let mut g = 0.0;
            let mut slack = 0.0;
            for (&zi, &yi) in c.iter().zip(y) {
                let u = yi - q;
                if u > 0.0 {
                    g += zi * t;
                } else if u < 0.0 {
                    g += zi * (t - 1.0);
                } else {
                    slack += zi.abs() * worst;
                }
            }
            (g.abs() + slack) / n
        })
        .fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Squared-loss Lasso
// ---------------------------------------------------------------------------

fn lasso_cd(cols: &[Vec<f64>], y: &[f64], lambda: f64, mut beta: Vec<f64>) -> (f64, Vec<f64>) {
    let n = y.len();
    let nf = n as f64;
    let mut r: Vec<f64> = y.to_vec();
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            r[i] -= c[i] * beta[j];
        }
    }
    let mut b0 = r.iter().sum::<f64>() / nf;
    for v in &mut r {
        *v -= b0;
    }
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();
    for _ in 0..100_000 {
        let mut delta: f64 = 0.0;
        for (j, c) in cols.iter().enumerate() {
            if norms[j] == 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / nf + norms[j] * old;
            let nb = soft_threshold(rho, lambda) / norms[j];
            if nb != old {
                for i in 0..n {
                    r[i] -= c[i] * (nb - old);
                }
            }
            delta = delta.max((nb - old).abs());
            beta[j] = nb;
        }
        let shift = r.iter().sum::<f64>() / nf;
        for v in &mut r {
            *v -= shift;
        }
        b0 += shift;
        delta = delta.max(shift.abs());
        if delta <= 1e-8 {
            break;
        }
    }
    (b0, beta)
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Lasso: `(1/(2n)) ||y - b0 - X b||^2 + lambda ||b||_1` by cyclic coordinate descent.
pub fn fit_l1_squared(x: &[Vec<f64>], y: &[f64], lambda: f64, seed: u64) -> Result<LinearQuantileModel> {
    fit_l1_squared_with(x, y, lambda, seed, &L1Options::default(), None)
}

/// The solver is deterministic; `_seed` is accepted for symmetry with the pinball fit.
pub fn fit_l1_squared_with(
    x: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    _seed: u64,
    opts: &L1Options,
    warm: Option<&[f64]>,
) -> Result<LinearQuantileModel> {
    let p = check_inputs(x, y, lambda)?;
    let std = if opts.standardize { Standardizer::fit(x) } else { Standardizer::identity(p) };
    let cols = columns(&std.transform(x), p);
    let start = warm.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    let (beta0, beta) = lasso_cd(&cols, y, lambda, start);
    Ok(LinearQuantileModel {
        loss: Loss::Squared,
        tau: None,
        lambda,
        beta0,
        l1_norm: beta.iter().map(|b| b.abs()).sum(),
        beta,
        standardization: std,
    })
}

/// `max_j |x_j . (y - mean(y))| / n` on the (optionally standardized) design.
pub fn lambda_max_squared(x: &[Vec<f64>], y: &[f64], standardize: bool) -> Result<f64> {
    let p = check_inputs(x, y, 0.0)?;
    let std = if standardize { Standardizer::fit(x) } else { Standardizer::identity(p) };
    let cols = columns(&std.transform(x), p);
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    Ok(cols
        .iter()
        .map(|c| c.iter().zip(y).map(|(a, b)| a * (b - ybar)).sum::<f64>().abs() / n)
        .fold(0.0, f64::max))
}

/// `count` log-spaced values from `max` down to `ratio * max`.
pub fn log_grid(max: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![max];
    }
    let (hi, lo) = (max.ln(), (max * ratio).ln());
    (0..count)
        .map(|k| (hi + (lo - hi) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

// ---------------------------------------------------------------------------
// Cross-validated path
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    /// L1 norm of the coefficients averaged over every repeat and fold.
    pub s: f64,
    pub mean_loss: f64,
    pub mean_coefficients: Vec<f64>,
    pub nonzero_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub loss: Loss,
    pub tau: QuantileLevel,
    /// Explicit penalties (any order; evaluated largest first). `None` uses 60 log-spaced values.
    pub grid: Option<Vec<f64>>,
    pub repeats: usize,
    pub folds: usize,
    pub seed: u64,
    /// Starts per fit on the path (warm start first).
    pub restarts: usize,
}

impl SelectConfig {
    pub fn new(loss: Loss, tau: QuantileLevel, seed: u64) -> Self {
        Self {
            loss,
            tau,
            grid: None,
            repeats: 10,
            folds: 3,
            seed,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub loss: Loss,
    pub tau: Option<QuantileLevel>,
    pub feature_names: Vec<String>,
    pub path: Vec<PathPoint>,
    pub chosen: usize,
    pub selected: Vec<String>,
}

impl Selection {
    pub fn chosen_point(&self) -> &PathPoint {
        &self.path[self.chosen]
    }

    /// Columns: lambda, s, mean_loss, nonzero_count, then one per coefficient.
    pub fn write_path_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["lambda".to_string(), "s".into(), "mean_loss".into(), "nonzero_count".into()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for pt in &self.path {
            let mut rec = vec![
                format!("{:e}", pt.lambda),
                format!("{}", pt.s),
                format!("{}", pt.mean_loss),
                pt.nonzero_count.to_string(),
            ];
            rec.extend(pt.mean_coefficients.iter().map(|c| format!("{c}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Repeated k-fold CV over a penalty path; picks the lowest mean held-out loss
/// (ties go to the larger penalty) and keeps the features whose averaged
/// coefficient is nonzero there.
pub fn select_features(d: &TabularDataset, features: &[String], target: &str, cfg: &SelectConfig) -> Result<Selection> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("no candidate features".into()));
    }
    let (_, x, y) = d.supervised(features, target)?;
    select_features_xy(&x, &y, features, cfg)
}

pub fn select_features_xy(x: &[Vec<f64>], y: &[f64], features: &[String], cfg: &SelectConfig) -> Result<Selection> {
    let p = check_inputs(x, y, 0.0)?;
    if p != features.len() {
        return Err(Error::InvalidArgument("feature names do not match design width".into()));
    }
    if cfg.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let mut grid = match &cfg.grid {
        Some(g) if g.is_empty() => return Err(Error::InvalidArgument("lambda grid is empty".into())),
        Some(g) => {
            if g.iter().any(|l| !l.is_finite() || *l < 0.0) {
                return Err(Error::InvalidArgument("lambda grid values must be finite and >= 0".into()));
            }
            g.clone()
        }
        None => {
            let top = match cfg.loss {
                Loss::Pinball => lambda_max_pinball(x, y, cfg.tau, true)?,
                Loss::Squared => lambda_max_squared(x, y, true)?,
            };
            log_grid(top.max(1e-12), 1e-3, 60)
        }
    };
    grid.sort_by(|a, b| b.total_cmp(a));
    let n = y.len();
    let tasks: Vec<(usize, usize)> = (0..cfg.repeats).flat_map(|r| (0..cfg.folds).map(move |f| (r, f))).collect();
    let plans = (0..cfg.repeats)
        .map(|r| make_folds(n, cfg.folds, derive_seed(cfg.seed, "select-folds", &[r as u64]), None))
        .collect::<Result<Vec<_>>>()?;
    let opts = L1Options {
        restarts: cfg.restarts,
        ..L1Options::default()
    };
    // per task: per lambda (loss, coefficients)
    let runs: Vec<Vec<(f64, Vec<f64>)>> = tasks
        .par_iter()
        .map(|&(r, f)| {
            let plan = &plans[r];
            let tr = plan.train_indices(f);
            let te = plan.test_indices(f);
            let xt: Vec<Vec<f64>> = tr.iter().map(|&i| x[i].clone()).collect();
            let yt: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
            let seed = derive_seed(cfg.seed, "select-fit", &[r as u64, f as u64]);
            let mut warm: Option<Vec<f64>> = None;
            let mut out = Vec::with_capacity(grid.len());
            for &lambda in &grid {
                let m = match cfg.loss {
                    Loss::Pinball => fit_l1_pinball_with(&xt, &yt, cfg.tau, lambda, seed, &opts, warm.as_deref())?,
                    Loss::Squared => fit_l1_squared_with(&xt, &yt, lambda, seed, &opts, warm.as_deref())?,
                };
                let pred: Vec<f64> = te.iter().map(|&i| m.predict(&x[i])).collect();
                let ye: Vec<f64> = te.iter().map(|&i| y[i]).collect();
                let loss = match cfg.loss {
                    Loss::Pinball => crate::metrics::pinball_between(&ye, &pred, cfg.tau),
                    Loss::Squared => mse(&ye, &pred),
                };
                warm = Some(m.beta.clone());
                out.push((loss, m.beta));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let t = tasks.len() as f64;
    let path: Vec<PathPoint> = grid
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let mean_loss = runs.iter().map(|run| run[k].0).sum::<f64>() / t;
            let mut coef = vec![0.0; p];
            for run in &runs {
                for (c, v) in coef.iter_mut().zip(&run[k].1) {
                    *c += v;
                }
            }
            for c in &mut coef {
                *c /= t;
            }
            PathPoint {
                lambda,
                s: coef.iter().map(|c| c.abs()).sum(),
                mean_loss,
                nonzero_count: coef.iter().filter(|c| c.abs() > NONZERO_EPS).count(),
                mean_coefficients: coef,
            }
        })
        .collect();
    let chosen = path
        .iter()
        .enumerate()
        .fold(0, |best, (k, pt)| if pt.mean_loss < path[best].mean_loss { k } else { best });
    let selected = features
        .iter()
        .zip(&path[chosen].mean_coefficients)
        .filter(|(_, c)| c.abs() > NONZERO_EPS)
        .map(|(f, _)| f.clone())
        .collect();
    Ok(Selection {
        loss: cfg.loss,
        tau: (cfg.loss == Loss::Pinball).then_some(cfg.tau),
        feature_names: features.to_vec(),
        path,
        chosen,
        selected,
    })
}
