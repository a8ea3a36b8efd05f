//! Missing-value imputers (mean, KNN, iterative with Bayesian ridge or a
//! random forest) and the nested-CV evaluator that ranks them.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::make_folds;
use crate::dataset::{ColumnKind, TabularDataset};
use crate::error::{Error, Result};
use crate::forest::{tune, Hyper, HyperGrid, QuantileForest, TuneObjective};
use crate::metrics::regression_metrics;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMethod {
    Mean,
    Knn,
    BayesIterative,
    ForestIterative,
}

impl ImputeMethod {
    pub const ALL: [ImputeMethod; 4] = [Self::Mean, Self::Knn, Self::BayesIterative, Self::ForestIterative];

    /// Short label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Self::Mean => "Mean",
            Self::Knn => "KNN",
            Self::BayesIterative => "BR",
            Self::ForestIterative => "RF",
        }
    }
}

impl fmt::Display for ImputeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ImputeMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Self::Mean),
            "knn" => Ok(Self::Knn),
            "br" | "bayes" | "bayes_iterative" | "bayes-ridge" | "bayes_ridge" => Ok(Self::BayesIterative),
            "rf" | "forest" | "forest_iterative" => Ok(Self::ForestIterative),
            _ => Err(Error::InvalidArgument(format!(
                "unknown imputation method '{s}' (expected mean, knn, br or rf)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputeOptions {
    pub k: usize,
    pub rounds: usize,
    pub tol: f64,
    pub forest_trees: usize,
    pub seed: u64,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        Self {
            k: 5,
            rounds: 10,
            tol: 1e-3,
            forest_trees: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterativeRegressor {
    BayesRidge,
    Forest,
}

#[derive(Debug, Clone)]
enum ColumnModel {
    /// Too few observed rows to fit anything; the column keeps its mean fill.
    MeanOnly,
    Ridge(BayesRidge),
    Forest(Box<QuantileForest>),
}

impl ColumnModel {
    fn predict(&self, row: &[f64], fallback: f64) -> f64 {
        match self {
            Self::MeanOnly => fallback,
            Self::Ridge(m) => m.predict(row),
            Self::Forest(f) => f.predict_mean_unchecked(row),
        }
    }
}

#[derive(Debug, Clone)]
enum FillState {
    Mean,
    Knn {
        k: usize,
        sds: Vec<f64>,
        train: Vec<Vec<Option<f64>>>,
    },
    Iterative {
        /// Column order of one sweep (ascending missing rate).
        order: Vec<usize>,
        models: Vec<ColumnModel>,
        sweeps: usize,
        tol: f64,
        sds: Vec<f64>,
    },
}

/// Imputer fitted on a training table; immutable afterwards.
#[derive(Debug, Clone)]
pub struct FittedImputer {
    pub method: ImputeMethod,
    columns: Vec<String>,
    means: Vec<f64>,
    state: FillState,
    /// Messages about fallbacks taken while fitting.
    pub warnings: Vec<String>,
    /// Largest scaled change of each iterative sweep during fitting.
    pub sweep_changes: Vec<f64>,
}

fn column_means(d: &TabularDataset) -> Result<Vec<f64>> {
    (0..d.n_cols())
        .map(|j| {
            let obs = d.observed(j);
            if obs.is_empty() {
                Err(Error::FullyMissing(d.columns()[j].name.clone()))
            } else {
                Ok(obs.iter().sum::<f64>() / obs.len() as f64)
            }
        })
        .collect()
}

/// Sample SD of observed values, 1 when undefined or zero.
fn column_sds(d: &TabularDataset, means: &[f64]) -> Vec<f64> {
    (0..d.n_cols())
        .map(|j| {
            let obs = d.observed(j);
            if obs.len() < 2 {
                return 1.0;
            }
            let v = obs.iter().map(|x| (x - means[j]).powi(2)).sum::<f64>() / (obs.len() - 1) as f64;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

fn mean_filled(d: &TabularDataset, means: &[f64]) -> Vec<Vec<f64>> {
    (0..d.n_rows())
        .map(|i| (0..d.n_cols()).map(|j| d.value(i, j).unwrap_or(means[j])).collect())
        .collect()
}

pub fn fit_transform_mean(d: &TabularDataset) -> Result<(FittedImputer, TabularDataset)> {
    let imp = FittedImputer {
        method: ImputeMethod::Mean,
        columns: d.column_names(),
        means: column_means(d)?,
        state: FillState::Mean,
        warnings: Vec::new(),
        sweep_changes: Vec::new(),
    };
    let out = imp.transform(d)?;
    Ok((imp, out))
}

pub fn fit_transform_knn(d: &TabularDataset, k: usize) -> Result<(FittedImputer, TabularDataset)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let means = column_means(d)?;
    let sds = column_sds(d, &means);
    let mut imp = FittedImputer {
        method: ImputeMethod::Knn,
        columns: d.column_names(),
        means,
        state: FillState::Knn { k, sds, train: d.cells() },
        warnings: Vec::new(),
        sweep_changes: Vec::new(),
    };
    let (out, warnings) = imp.transform_report(d)?;
    imp.warnings = warnings;
    Ok((imp, out))
}

pub fn fit_transform_iterative(
    d: &TabularDataset,
    regressor: IterativeRegressor,
    opts: &ImputeOptions,
) -> Result<(FittedImputer, TabularDataset)> {
    if opts.rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    let means = column_means(d)?;
    let sds = column_sds(d, &means);
    let (n, p) = (d.n_rows(), d.n_cols());
    let mut order: Vec<usize> = (0..p).collect();
    let miss: Vec<usize> = (0..p).map(|j| (0..n).filter(|&i| d.is_missing(i, j)).count()).collect();
    order.sort_by_key(|&j| (miss[j], j));
    let mut filled = mean_filled(d, &means);
    let mut warnings = Vec::new();
    let mut models: Vec<ColumnModel> = vec![ColumnModel::MeanOnly; p];
    let mut changes = Vec::new();
    let incomplete: Vec<usize> = order.iter().copied().filter(|&j| miss[j] > 0).collect();
    for round in 0..opts.rounds {
        if incomplete.is_empty() {
            break;
        }
        let mut worst: f64 = 0.0;
        for &j in &incomplete {
            let model = fit_column(d, &filled, j, regressor, opts, round, &mut warnings);
            let mut change: f64 = 0.0;
            for (i, row) in filled.iter_mut().enumerate() {
                if d.is_missing(i, j) {
                    let v = model.predict(&drop_col(row, j), means[j]);
                    change = change.max((v - row[j]).abs());
                    row[j] = v;
                }
            }
            worst = worst.max(change / sds[j]);
            models[j] = model;
        }
        changes.push(worst);
        if worst <= opts.tol {
            break;
        }
    }
    // complete columns still need a model for tables that miss them later
    for &j in &order {
        if miss[j] == 0 {
            models[j] = fit_column(d, &filled, j, regressor, opts, opts.rounds, &mut warnings);
        }
    }
    warnings.sort();
    warnings.dedup();
    let imp = FittedImputer {
        method: match regressor {
            IterativeRegressor::BayesRidge => ImputeMethod::BayesIterative,
            IterativeRegressor::Forest => ImputeMethod::ForestIterative,
        },
        columns: d.column_names(),
        means,
        state: FillState::Iterative {
            order,
            models,
            sweeps: changes.len(),
            tol: opts.tol,
            sds,
        },
        warnings,
        sweep_changes: changes,
    };
    Ok((imp, d.with_filled(&filled)))
}

fn drop_col(row: &[f64], j: usize) -> Vec<f64> {
    row.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, &v)| v).collect()
}

fn fit_column(
    d: &TabularDataset,
    filled: &[Vec<f64>],
    j: usize,
    regressor: IterativeRegressor,
    opts: &ImputeOptions,
    round: usize,
    warnings: &mut Vec<String>,
) -> ColumnModel {
    let rows: Vec<usize> = (0..d.n_rows()).filter(|&i| !d.is_missing(i, j)).collect();
    let name = &d.columns()[j].name;
    if rows.len() < 2 || d.n_cols() < 2 {
        warnings.push(format!("column '{name}' held at its mean: too few observed rows to fit a regressor"));
        return ColumnModel::MeanOnly;
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|&i| drop_col(&filled[i], j)).collect();
    let y: Vec<f64> = rows.iter().map(|&i| filled[i][j]).collect();
    match regressor {
        IterativeRegressor::BayesRidge => ColumnModel::Ridge(BayesRidge::fit(&x, &y)),
        IterativeRegressor::Forest => {
            let p = x[0].len();
            let names: Vec<String> = (0..p).map(|c| format!("c{c}")).collect();
            let hyper = Hyper::new(opts.forest_trees.max(1), None, p.div_ceil(3).max(1));
            let seed = derive_seed(opts.seed, "impute-forest", &[round as u64, j as u64]);
            match QuantileForest::fit(&x, &y, &names, hyper, seed) {
                Ok(f) => ColumnModel::Forest(Box::new(f)),
                Err(e) => {
                    warnings.push(format!("column '{name}' held at its mean: {e}"));
                    ColumnModel::MeanOnly
                }
            }
        }
    }
}

impl FittedImputer {
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn transform(&self, d: &TabularDataset) -> Result<TabularDataset> {
        self.transform_report(d).map(|(t, _)| t)
    }

    /// Fill every missing cell; observed cells are copied unchanged.
    pub fn transform_report(&self, d: &TabularDataset) -> Result<(TabularDataset, Vec<String>)> {
        if d.column_names() != self.columns {
            return Err(Error::Validation("table columns differ from those the imputer was fit on".into()));
        }
        let mut warnings = Vec::new();
        let filled = match &self.state {
            FillState::Mean => mean_filled(d, &self.means),
            FillState::Knn { k, sds, train } => self.knn_fill(d, *k, sds, train, &mut warnings),
            FillState::Iterative {
                order,
                models,
                sweeps,
                tol,
                sds,
                ..
            } => {
                let mut filled = mean_filled(d, &self.means);
                for _ in 0..*sweeps {
                    let mut worst: f64 = 0.0;
                    for &j in order {
                        for (i, row) in filled.iter_mut().enumerate() {
                            if d.is_missing(i, j) {
                                let v = models[j].predict(&drop_col(row, j), self.means[j]);
                                worst = worst.max((v - row[j]).abs() / sds[j]);
                                row[j] = v;
                            }
                        }
                    }
                    if worst <= *tol {
                        break;
                    }
                }
                filled
            }
        };
        Ok((d.with_filled(&filled), warnings))
    }

    fn knn_fill(
        &self,
        d: &TabularDataset,
        k: usize,
        sds: &[f64],
        train: &[Vec<Option<f64>>],
        warnings: &mut Vec<String>,
    ) -> Vec<Vec<f64>> {
        let p = self.columns.len();
        let z = |j: usize, v: f64| (v - self.means[j]) / sds[j];
        let mut out = mean_filled(d, &self.means);
        let cells = d.cells();
        for (i, out_row) in out.iter_mut().enumerate() {
            let row = &cells[i];
            if row.iter().all(Option::is_some) {
                continue;
            }
            // masked Euclidean distance to every training row
            let dist: Vec<Option<f64>> = train
                .iter()
                .map(|t| {
                    let mut s = 0.0;
                    let mut c = 0usize;
                    for j in 0..p {
                        if let (Some(a), Some(b)) = (row[j], t[j]) {
                            s += (z(j, a) - z(j, b)).powi(2);
                            c += 1;
                        }
                    }
                    (c > 0).then(|| (s * p as f64 / c as f64).sqrt())
                })
                .collect();
            for j in 0..p {
                if row[j].is_some() {
                    continue;
                }
                let mut cand: Vec<(f64, usize)> = train
                    .iter()
                    .enumerate()
                    .filter_map(|(r, t)| t[j].and(dist[r]).map(|d| (d, r)))
                    .collect();
                if cand.is_empty() {
                    warnings.push(format!(
                        "row {i}, column '{}': no neighbour observes it; used the column mean",
                        self.columns[j]
                    ));
                    continue;
                }
                cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let take = &cand[..k.min(cand.len())];
                out_row[j] = take.iter().map(|&(_, r)| train[r][j].unwrap()).sum::<f64>() / take.len() as f64;
            }
        }
        out
    }
}

/// Fit `method` with default options on `d` and return the filled table.
pub fn fit_transform(d: &TabularDataset, method: ImputeMethod, opts: &ImputeOptions) -> Result<(FittedImputer, TabularDataset)> {
    match method {
        ImputeMethod::Mean => fit_transform_mean(d),
        ImputeMethod::Knn => fit_transform_knn(d, opts.k),
        ImputeMethod::BayesIterative => fit_transform_iterative(d, IterativeRegressor::BayesRidge, opts),
        ImputeMethod::ForestIterative => fit_transform_iterative(d, IterativeRegressor::Forest, opts),
    }
}

// ---------------------------------------------------------------------------
// Bayesian ridge
// ---------------------------------------------------------------------------

/// Linear model whose weight and noise precisions are set by evidence
/// maximization (fixed-point updates with weak Gamma priors).
#[derive(Debug, Clone, PartialEq)]
pub struct BayesRidge {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub iterations: usize,
}

impl BayesRidge {
    const MAX_ITER: usize = 300;
    const TOL: f64 = 1e-3;
    const PRIOR: f64 = 1e-6;

    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Self {
        let n = y.len();
        let p = x.first().map_or(0, Vec::len);
        let nf = n as f64;
        let y_off = y.iter().sum::<f64>() / nf;
        if p == 0 {
            return Self {
                intercept: y_off,
                coef: Vec::new(),
                alpha: 1.0,
                lambda: 1.0,
                iterations: 0,
            };
        }
        let x_off: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
        let xc = DMatrix::from_fn(n, p, |i, j| x[i][j] - x_off[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_off));
        let svd = xc.clone().svd(true, true);
        let u = svd.u.as_ref().expect("requested U");
        let vt = svd.v_t.as_ref().expect("requested V^T");
        let s = &svd.singular_values;
        let uty = u.transpose() * &yc;
        let eig: Vec<f64> = s.iter().map(|v| v * v).collect();
        let var_y = yc.iter().map(|v| v * v).sum::<f64>() / nf;
        let mut alpha = 1.0 / (var_y + f64::EPSILON);
        let mut lambda = 1.0;
        let solve = |alpha: f64, lambda: f64| -> DVector<f64> {
            let w = DVector::from_iterator(
                s.len(),
                s.iter().zip(uty.iter()).map(|(&si, &ui)| si / (si * si + lambda / alpha) * ui),
            );
            vt.transpose() * w
        };
        let mut coef_old: Option<DVector<f64>> = None;
        let mut iterations = 0;
        for it in 0..Self::MAX_ITER {
            iterations = it + 1;
            let coef = solve(alpha, lambda);
            let resid = &yc - &xc * &coef;
            let rss = resid.norm_squared();
            let gamma: f64 = eig.iter().map(|&e| alpha * e / (lambda + alpha * e)).sum();
            lambda = (gamma + 2.0 * Self::PRIOR) / (coef.norm_squared() + 2.0 * Self::PRIOR);
            alpha = (nf - gamma + 2.0 * Self::PRIOR) / (rss + 2.0 * Self::PRIOR);
            if let Some(old) = &coef_old {
                if (old - &coef).abs().sum() < Self::TOL {
                    break;
                }
            }
            coef_old = Some(coef);
        }
        let coef = solve(alpha, lambda);
        let intercept = y_off - coef.iter().zip(&x_off).map(|(c, m)| c * m).sum::<f64>();
        Self {
            intercept,
            coef: coef.iter().copied().collect(),
            alpha,
            lambda,
            iterations,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeEvalConfig {
    pub outer_k: usize,
    pub inner_k: usize,
    pub seed: u64,
    /// Grid for the mean forest tuned on each imputed outer-train fold.
    pub grid: Option<HyperGrid>,
    pub options: ImputeOptions,
}

impl ImputeEvalConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            outer_k: 4,
            inner_k: 3,
            seed,
            grid: None,
            options: ImputeOptions { seed, ..ImputeOptions::default() },
        }
    }
}

/// Downstream forest grid used when none is given: 100 trees, depth {3, 5, unlimited},
/// max_features {ceil(p/3), p}.
pub fn default_eval_grid(p: usize) -> HyperGrid {
    let mut mf = vec![p.div_ceil(3).max(1), p];
    mf.dedup();
    HyperGrid {
        n_estimators: vec![100],
        max_depth: vec![Some(3), Some(5), None],
        max_features: mf,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: ImputeMethod,
    pub mse: f64,
    pub rmse: f64,
    /// Mean over folds with a defined R².
    pub r2: Option<f64>,
    pub fold_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationEvalReport {
    pub target: String,
    pub seed: u64,
    pub methods: Vec<MethodScore>,
    pub best_mse: ImputeMethod,
    pub best_rmse: ImputeMethod,
    pub best_r2: Option<ImputeMethod>,
    pub warnings: Vec<String>,
}

impl ImputationEvalReport {
    pub fn score(&self, m: ImputeMethod) -> &MethodScore {
        self.methods.iter().find(|s| s.method == m).expect("all four methods are scored")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<6} {:>10} {:>10} {:>10}\n", "Method", "MSE", "RMSE", "R2");
        for m in &self.methods {
            let r2 = m.r2.map_or("NA".to_string(), |v| format!("{v:.4}"));
            s += &format!("{:<6} {:>10.4} {:>10.4} {:>10}\n", m.method.label(), m.mse, m.rmse, r2);
        }
        s += &format!("best by MSE: {}\n", self.best_mse);
        s
    }
}

/// Score each imputer by the held-out error of a tuned mean forest trained on
/// the imputed outer-training rows.
pub fn evaluate_imputers(d: &TabularDataset, target: &str, cfg: &ImputeEvalConfig) -> Result<ImputationEvalReport> {
    d.column_index(target)?;
    if d.n_rows() < cfg.outer_k {
        return Err(Error::Validation(format!(
            "{} rows cannot be split into {} outer folds",
            d.n_rows(),
            cfg.outer_k
        )));
    }
    let plan = make_folds(d.n_rows(), cfg.outer_k, derive_seed(cfg.seed, "impute-outer", &[]), None)?;
    let splits = plan.splits();
    let per_method: Vec<(MethodScore, Vec<String>)> = ImputeMethod::ALL
        .par_iter()
        .map(|&method| {
            let mut warnings = Vec::new();
            let mut fold_mse = Vec::new();
            let mut fold_rmse = Vec::new();
            let mut fold_r2 = Vec::new();
            for (f, (tr, te)) in splits.iter().enumerate() {
                let train = d.select_rows(tr)?;
                let test = d.select_rows(te)?;
                let empty: Vec<String> = (0..train.n_cols())
                    .filter(|&j| train.observed(j).is_empty())
                    .map(|j| train.columns()[j].name.clone())
                    .collect();
                if empty.contains(&target.to_string()) {
                    return Err(Error::FullyMissing(target.to_string()));
                }
                for c in &empty {
                    warnings.push(format!("fold {f}: dropped '{c}' (no observed values in the training rows)"));
                }
                let train = train.drop_columns(&empty)?;
                let test = test.drop_columns(&empty)?;
                let opts = ImputeOptions {
                    seed: derive_seed(cfg.options.seed, "impute-fold", &[f as u64]),
                    ..cfg.options
                };
                let (imp, train_f) = fit_transform(&train, method, &opts)?;
                warnings.extend(imp.warnings.iter().map(|w| format!("fold {f}: {w}")));
                let (test_f, tw) = imp.transform_report(&test)?;
                warnings.extend(tw.into_iter().map(|w| format!("fold {f}: {w}")));
                let features = train_f.names_of_kind(ColumnKind::Feature);
                let keep = |orig: &TabularDataset, filled: &TabularDataset| -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
                    let tj = orig.column_index(target)?;
                    let rows: Vec<usize> = (0..orig.n_rows()).filter(|&i| !orig.is_missing(i, tj)).collect();
                    let sub = filled.select_rows(&rows)?;
                    Ok((sub.matrix(&features)?, rows.iter().map(|&i| orig.value(i, tj).unwrap()).collect()))
                };
                let (xtr, ytr) = keep(&train, &train_f)?;
                let (xte, yte) = keep(&test, &test_f)?;
                if xte.is_empty() {
                    continue;
                }
                let grid = cfg.grid.clone().unwrap_or_else(|| default_eval_grid(features.len()));
                let tuned = tune(
                    &xtr,
                    &ytr,
                    &features,
                    &grid,
                    TuneObjective::Mse,
                    cfg.inner_k,
                    derive_seed(cfg.seed, "impute-inner", &[f as u64]),
                )?;
                let forest = QuantileForest::fit(&xtr, &ytr, &features, tuned.best, derive_seed(cfg.seed, "impute-refit", &[f as u64]))?;
                let pred: Vec<f64> = xte.iter().map(|r| forest.predict_mean_unchecked(r)).collect();
                let m = if yte.len() >= 2 {
                    regression_metrics(&yte, &pred)?
                } else {
                    let e = crate::metrics::mse(&yte, &pred);
                    crate::metrics::RegressionMetrics { mse: e, rmse: e.sqrt(), r2: None }
                };
                fold_mse.push(m.mse);
                fold_rmse.push(m.rmse);
                if let Some(r) = m.r2 {
                    fold_r2.push(r);
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            Ok((
                MethodScore {
                    method,
                    mse: mean(&fold_mse),
                    rmse: mean(&fold_rmse),
                    r2: (!fold_r2.is_empty()).then(|| mean(&fold_r2)),
                    fold_mse,
                },
                warnings,
            ))
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let mut methods = Vec::new();
    for (m, w) in per_method {
        methods.push(m);
        warnings.extend(w);
    }
    warnings.sort();
    warnings.dedup();
    let pick = |key: &dyn Fn(&MethodScore) -> f64| {
        methods
            .iter()
            .fold(None::<&MethodScore>, |b, m| match b {
                Some(b) if key(b) <= key(m) => Some(b),
                _ => Some(m),
            })
            .unwrap()
            .method
    };
    let best_mse = pick(&|m| m.mse);
    let best_rmse = pick(&|m| m.rmse);
    let best_r2 = methods
        .iter()
        .filter(|m| m.r2.is_some())
        .fold(None::<&MethodScore>, |b, m| match b {
            Some(b) if b.r2 >= m.r2 => Some(b),
            _ => Some(m),
        })
        .map(|m| m.method);
    Ok(ImputationEvalReport {
        target: target.to_string(),
        seed: cfg.seed,
        methods,
        best_mse,
        best_rmse,
        best_r2,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ColumnSpec;
    use crate::rng::SplitMix64;

    fn specs(names: &[&str]) -> Vec<ColumnSpec> {
        names.iter().map(|n| ColumnSpec::new(n, "", ColumnKind::Feature)).collect()
    }

    fn table(cells: Vec<Vec<Option<f64>>>) -> TabularDataset {
        let names: Vec<String> = (0..cells[0].len()).map(|j| format!("c{j}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        TabularDataset::from_cells(specs(&refs), cells, None).unwrap()
    }

    fn random_table(n: usize, p: usize, rate: f64, seed: u64) -> TabularDataset {
        let mut g = SplitMix64::new(seed);
        let cells = (0..n)
            .map(|_| {
                let base = g.normal();
                (0..p)
                    .map(|j| {
                        let v = base * (j as f64 + 1.0) + 0.3 * g.normal();
                        (g.next_f64() >= rate).then_some(v)
                    })
                    .collect()
            })
            .collect::<Vec<Vec<Option<f64>>>>();
        // keep at least two observations per column
        let mut cells = cells;
        for j in 0..p {
            cells[0][j] = Some(j as f64);
            cells[1][j] = Some(j as f64 + 1.0);
        }
        table(cells)
    }

    fn all_methods(d: &TabularDataset) -> Vec<(ImputeMethod, TabularDataset)> {
        ImputeMethod::ALL
            .iter()
            .map(|&m| (m, fit_transform(d, m, &ImputeOptions { forest_trees: 10, ..Default::default() }).unwrap().1))
            .collect()
    }

    #[test]
    fn mean_examples() {
        let d = table(vec![vec![Some(1.0)], vec![None], vec![Some(3.0)]]);
        let (_, out) = fit_transform_mean(&d).unwrap();
        assert_eq!(out.value(1, 0), Some(2.0));
        let d = table(vec![vec![Some(4.0)], vec![None], vec![None], vec![Some(8.0)]]);
        let (_, out) = fit_transform_mean(&d).unwrap();
        assert_eq!((out.value(1, 0), out.value(2, 0)), (Some(6.0), Some(6.0)));
        let full = random_table(6, 3, 0.0, 1);
        assert_eq!(fit_transform_mean(&full).unwrap().1, full);
    }

    #[test]
    fn fully_missing_column_is_named() {
        let d = table(vec![vec![Some(1.0), None], vec![Some(2.0), None]]);
        match fit_transform_mean(&d).unwrap_err() {
            Error::FullyMissing(c) => assert_eq!(c, "c1"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn observed_entries_survive_and_mask_clears() {
        let d = random_table(20, 4, 0.25, 2);
        for (m, out) in all_methods(&d) {
            assert!(out.is_complete(), "{m}");
            for i in 0..d.n_rows() {
                for j in 0..d.n_cols() {
                    if let Some(v) = d.value(i, j) {
                        assert_eq!(out.value(i, j), Some(v), "{m}");
                    }
                }
            }
        }
    }

    #[test]
    fn mean_imputer_is_idempotent() {
        let d = random_table(15, 3, 0.3, 3);
        let (imp, out) = fit_transform_mean(&d).unwrap();
        assert_eq!(imp.transform(&out).unwrap(), out);
    }

    #[test]
    fn knn_copies_duplicate_and_averages_ties() {
        let d = table(vec![
            vec![Some(1.0), Some(2.0), Some(5.0)],
            vec![Some(1.0), Some(2.0), None],
            vec![Some(9.0), Some(-3.0), Some(0.0)],
        ]);
        let (_, out) = fit_transform_knn(&d, 1).unwrap();
        assert_eq!(out.value(1, 2), Some(5.0));
        // two neighbours at equal distance on either side
        let d = table(vec![
            vec![Some(0.0), None],
            vec![Some(1.0), Some(2.0)],
            vec![Some(-1.0), Some(4.0)],
            vec![Some(5.0), Some(10.0)],
        ]);
        let (_, out) = fit_transform_knn(&d, 2).unwrap();
        assert_eq!(out.value(0, 1), Some(3.0));
    }

    #[test]
    fn knn_with_all_neighbours_is_mean_imputation() {
        let d = random_table(12, 4, 0.2, 4);
        let (_, knn) = fit_transform_knn(&d, d.n_rows() - 1).unwrap();
        // brute-force oracle: average over rows observing j that share a coordinate with row i
        let cells = d.cells();
        for j in 0..d.n_cols() {
            for i in 0..d.n_rows() {
                if !d.is_missing(i, j) {
                    continue;
                }
                let donors: Vec<f64> = (0..d.n_rows())
                    .filter(|&r| cells[r][j].is_some())
                    .filter(|&r| (0..d.n_cols()).any(|c| cells[i][c].is_some() && cells[r][c].is_some()))
                    .map(|r| cells[r][j].unwrap())
                    .collect();
                let m = donors.iter().sum::<f64>() / donors.len() as f64;
                assert!((knn.value(i, j).unwrap() - m).abs() < 1e-12);
                if donors.len() == d.observed(j).len() {
                    let all = d.observed(j);
                    assert!((m - all.iter().sum::<f64>() / all.len() as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn knn_falls_back_without_candidates() {
        // row 0 shares no observed coordinate with rows observing c1
        let d = table(vec![
            vec![Some(1.0), None, None],
            vec![None, Some(2.0), Some(1.0)],
            vec![None, Some(4.0), Some(3.0)],
            vec![Some(3.0), None, None],
        ]);
        let (imp, out) = fit_transform_knn(&d, 1).unwrap();
        assert_eq!(out.value(0, 1), Some(3.0));
        assert!(!imp.warnings.is_empty());
    }

    #[test]
    fn bayes_ridge_recovers_collinear_column() {
        let mut g = SplitMix64::new(5);
        let mut cells: Vec<Vec<Option<f64>>> = (0..20)
            .map(|_| {
                let a = g.normal() * 3.0;
                vec![Some(a), Some(2.0 * a)]
            })
            .collect();
        cells[7][1] = None;
        let d = table(cells);
        let x1 = d.value(7, 0).unwrap();
        let (_, out) = fit_transform_iterative(&d, IterativeRegressor::BayesRidge, &ImputeOptions::default()).unwrap();
        assert!((out.value(7, 1).unwrap() - 2.0 * x1).abs() < 1e-2);
    }

    #[test]
    fn bayes_ridge_close_to_ols_on_clean_line() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 - 0.5 * r[0]).collect();
        let m = BayesRidge::fit(&x, &y);
        assert!((m.coef[0] + 0.5).abs() < 1e-6 && (m.intercept - 3.0).abs() < 1e-6);
        assert!(m.iterations <= 300);
    }

    #[test]
    fn iterative_without_missing_is_identity() {
        let d = random_table(10, 3, 0.0, 6);
        for r in [IterativeRegressor::BayesRidge, IterativeRegressor::Forest] {
            let opts = ImputeOptions { forest_trees: 5, ..Default::default() };
            let (imp, out) = fit_transform_iterative(&d, r, &opts).unwrap();
            assert_eq!(out, d);
            assert!(imp.sweep_changes.is_empty());
        }
    }

    #[test]
    fn iterative_terminates_and_is_deterministic() {
        let d = random_table(25, 4, 0.2, 7);
        let opts = ImputeOptions { forest_trees: 20, rounds: 4, seed: 3, ..Default::default() };
        let (a, out_a) = fit_transform_iterative(&d, IterativeRegressor::Forest, &opts).unwrap();
        let (_, out_b) = fit_transform_iterative(&d, IterativeRegressor::Forest, &opts).unwrap();
        assert!(a.sweep_changes.len() <= 4);
        for i in 0..d.n_rows() {
            for j in 0..d.n_cols() {
                assert_eq!(out_a.value(i, j).unwrap().to_bits(), out_b.value(i, j).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn fitted_imputers_fill_new_rows() {
        let d = random_table(24, 4, 0.2, 8);
        let train = d.select_rows(&(0..18).collect::<Vec<_>>()).unwrap();
        let test = d.select_rows(&(18..24).collect::<Vec<_>>()).unwrap();
        for m in ImputeMethod::ALL {
            let (imp, _) = fit_transform(&train, m, &ImputeOptions { forest_trees: 10, ..Default::default() }).unwrap();
            let out = imp.transform(&test).unwrap();
            assert!(out.is_complete());
        }
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("rf".parse::<ImputeMethod>().unwrap(), ImputeMethod::ForestIterative);
        assert_eq!("KNN".parse::<ImputeMethod>().unwrap(), ImputeMethod::Knn);
        assert!("median".parse::<ImputeMethod>().is_err());
    }

    #[test]
    fn evaluation_reports_four_methods() {
        let mut d = random_table(24, 4, 0.15, 9);
        // make c3 the target
        let cols: Vec<ColumnSpec> = d
            .columns()
            .iter()
            .map(|c| ColumnSpec::new(&c.name, "", if c.name == "c3" { ColumnKind::Target } else { ColumnKind::Feature }))
            .collect();
        d = TabularDataset::from_cells(cols, d.cells(), None).unwrap();
        let mut cfg = ImputeEvalConfig::new(1);
        cfg.options.forest_trees = 10;
        cfg.grid = Some(HyperGrid {
            n_estimators: vec![10],
            max_depth: vec![Some(2)],
            max_features: vec![1, 3],
        });
        let r = evaluate_imputers(&d, "c3", &cfg).unwrap();
        assert_eq!(r.methods.len(), 4);
        assert!(r.methods.iter().all(|m| m.mse.is_finite() && m.fold_mse.len() == 4));
        let best = r.methods.iter().map(|m| m.mse).fold(f64::INFINITY, f64::min);
        assert_eq!(r.score(r.best_mse).mse, best);
        assert_eq!(evaluate_imputers(&d, "c3", &cfg).unwrap(), r);
    }
}
