//! Combined versus sex-specific mean forests under one outer CV.

use serde::{Deserialize, Serialize};

use super::make_folds;
use crate::dataset::{canonical_gender, TabularDataset};
use crate::error::{Error, Result};
use crate::forest::{tune, HyperGrid, QuantileForest, TuneObjective};
use crate::metrics::regression_metrics;
use crate::rng::derive_seed;

pub const FEMALE_INDICATOR: &str = "Gender_isFemale";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSets {
    pub combined: Vec<String>,
    pub men: Vec<String>,
    pub women: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub outer_k: usize,
    pub inner_k: usize,
    pub seed: u64,
    /// `None` uses [`compare_grid`] per feature count.
    pub grid: Option<HyperGrid>,
}

impl CompareConfig {
    pub fn new(seed: u64) -> Self {
        Self { outer_k: 5, inner_k: 4, seed, grid: None }
    }
}

/// {100, 200} trees x depth {3, 5, 9} x max_features {1, 3, 6, p}.
pub fn compare_grid(p: usize) -> HyperGrid {
    let mut mf: Vec<usize> = [1, 3, 6, p].into_iter().filter(|&m| m >= 1 && m <= p).collect();
    mf.sort_unstable();
    mf.dedup();
    HyperGrid {
        n_estimators: vec![100, 200],
        max_depth: [3, 5, 9].into_iter().map(Some).collect(),
        max_features: mf,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub train: String,
    pub test: String,
    pub mse: f64,
    pub rmse: f64,
    /// Mean over folds with at least two test rows and non-constant targets.
    pub r2: Option<f64>,
    pub fold_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub target: String,
    pub seed: u64,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn row(&self, train: &str, test: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.train == train && r.test == test)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("target: {}\nseed: {}\n", self.target, self.seed);
        s.push_str(&format!("{:<10} {:<8} {:>9} {:>9} {:>9}\n", "train", "test", "MSE", "RMSE", "R2"));
        for r in &self.rows {
            let r2 = r.r2.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            s.push_str(&format!(
                "{:<10} {:<8} {:>9.4} {:>9.3} {:>9}\n",
                r.train, r.test, r.mse, r.rmse, r2
            ));
        }
        s
    }
}

#[derive(Default)]
struct Acc {
    mse: Vec<f64>,
    rmse: Vec<f64>,
    r2: Vec<f64>,
}

impl Acc {
    fn push(&mut self, y: &[f64], yhat: &[f64]) -> Result<()> {
        if y.is_empty() {
            return Ok(());
        }
        if y.len() == 1 {
            let e = (y[0] - yhat[0]).powi(2);
            self.mse.push(e);
            self.rmse.push(e.sqrt());
            return Ok(());
        }
        let m = regression_metrics(y, yhat)?;
        self.mse.push(m.mse);
        self.rmse.push(m.rmse);
        if let Some(r2) = m.r2 {
            self.r2.push(r2);
        }
        Ok(())
    }

    fn row(self, train: &str, test: &str) -> CompareRow {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        CompareRow {
            train: train.into(),
            test: test.into(),
            mse: mean(&self.mse),
            rmse: mean(&self.rmse),
            r2: (!self.r2.is_empty()).then(|| mean(&self.r2)),
            fold_mse: self.mse,
        }
    }
}

/// Raw label whose canonical form is `want`; errors when spellings are mixed.
fn raw_label(d: &TabularDataset, want: &str) -> Result<String> {
    let mut found: Option<&str> = None;
    for l in d.group_labels().iter().flatten() {
        if canonical_gender(l) == Some(want) {
            match found {
                Some(f) if f != l => {
                    return Err(Error::Validation(format!(
                        "group labels '{f}' and '{l}' both mean {want}"
                    )))
                }
                _ => found = Some(l),
            }
        }
    }
    found
        .map(str::to_string)
        .ok_or_else(|| Error::Validation(format!("no rows labelled {want}")))
}

fn fit_predict(
    x_train: &[Vec<f64>],
    y_train: &[f64],
    x_test: &[Vec<f64>],
    names: &[String],
    cfg: &CompareConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let grid = cfg.grid.clone().unwrap_or_else(|| compare_grid(names.len()));
    let tuned = tune(x_train, y_train, names, &grid, TuneObjective::Mse, cfg.inner_k, seed)?;
    let f = QuantileForest::fit(x_train, y_train, names, tuned.best, derive_seed(seed, "compare-fit", &[]))?;
    x_test.iter().map(|r| f.predict_mean(r)).collect()
}

/// Five-way comparison: combined model scored on everyone, men and women,
/// and each sex-specific model scored on its own sex. `d` must be complete
/// in every listed feature; rows with a missing target are dropped.
pub fn compare_combined_vs_split(
    d: &TabularDataset,
    target: &str,
    sets: &FeatureSets,
    cfg: &CompareConfig,
) -> Result<CompareReport> {
    let women_label = raw_label(d, "women")?;
    raw_label(d, "men")?;
    let needs_indicator = sets.combined.iter().any(|c| c == FEMALE_INDICATOR);
    let d = if needs_indicator && d.column_index(FEMALE_INDICATOR).is_err() {
        d.add_indicator(FEMALE_INDICATOR, &women_label)?
    } else {
        d.clone()
    };
    let (rows, _, y) = d.supervised(&[], target)?;
    let sex: Vec<String> = rows
        .iter()
        .map(|&i| {
            d.group_labels()[i]
                .as_deref()
                .and_then(canonical_gender)
                .map(str::to_string)
                .ok_or_else(|| Error::Validation(format!("row {i} has no recognised sex label")))
        })
        .collect::<Result<_>>()?;
    let sub = d.select_rows(&rows)?;
    let xc = sub.matrix(&sets.combined)?;
    let xm = sub.matrix(&sets.men)?;
    let xw = sub.matrix(&sets.women)?;

    let plan = make_folds(rows.len(), cfg.outer_k, derive_seed(cfg.seed, "compare-outer", &[]), Some(&sex))?;
    let mut acc: [Acc; 5] = Default::default();
    for (f, (train, test)) in plan.splits().into_iter().enumerate() {
        let fseed = derive_seed(cfg.seed, "compare-fold", &[f as u64]);
        let pick = |m: &[Vec<f64>], idx: &[usize]| idx.iter().map(|&i| m[i].clone()).collect::<Vec<_>>();
        let pick_y = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();

        let pred = fit_predict(&pick(&xc, &train), &pick_y(&train), &pick(&xc, &test), &sets.combined, cfg, derive_seed(fseed, "combined", &[]))?;
        let yt = pick_y(&test);
        acc[0].push(&yt, &pred)?;
        for (slot, want) in [(1, "men"), (2, "women")] {
            let (yy, pp): (Vec<f64>, Vec<f64>) = test
                .iter()
                .zip(&pred)
                .filter(|(i, _)| sex[**i] == want)
                .map(|(&i, &p)| (y[i], p))
                .unzip();
            acc[slot].push(&yy, &pp)?;
        }

        for (slot, want, x, names) in [(3, "men", &xm, &sets.men), (4, "women", &xw, &sets.women)] {
            let tr: Vec<usize> = train.iter().copied().filter(|&i| sex[i] == want).collect();
            let te: Vec<usize> = test.iter().copied().filter(|&i| sex[i] == want).collect();
            let pred = fit_predict(&pick(x, &tr), &pick_y(&tr), &pick(x, &te), names, cfg, derive_seed(fseed, want, &[]))?;
            acc[slot].push(&pick_y(&te), &pred)?;
        }
    }
    let [a0, a1, a2, a3, a4] = acc;
    Ok(CompareReport {
        target: target.into(),
        seed: cfg.seed,
        rows: vec![
            a0.row("Combined", "Combined"),
            a1.row("Combined", "Men"),
            a2.row("Combined", "Women"),
            a3.row("Men", "Men"),
            a4.row("Women", "Women"),
        ],
    })
}
