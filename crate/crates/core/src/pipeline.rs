//! Run configuration and the end-to-end per-group pipeline behind `reproduce`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{canonical_gender, ColumnKind, Schema, TabularDataset};
use crate::error::{Error, Result};
use crate::explain::{
    ice_1d, pdp_2d, pdp_slopes, shap_global, shap_individual, ForestModel, IceGrid, PdpSurface, ShapMode,
    ShapReport, Waterfall, MAX_EXACT_FEATURES,
};
use crate::forest::{tune, Hyper, HyperGrid, PredictionTarget, QuantileForest, QuantileInterp, TuneObjective};
use crate::impute::{evaluate_imputers, fit_transform, ImputeEvalConfig, ImputeMethod, ImputeOptions};
use crate::l1::{select_features, Loss, SelectConfig, Selection};
use crate::metrics::QuantileLevel;
use crate::plot::{emit_plot, PlotData};
use crate::rng::derive_seed;
use crate::targets as tg;

/// Flat run configuration. Every key can be overridden by the CLI flag of
/// the same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    /// JSON schema file; the built-in long-jump schema when absent.
    pub schema: Option<PathBuf>,
    pub target: String,
    pub group: String,
    pub tau: f64,
    pub seed: Option<u64>,
    /// "auto" or one of mean, knn, br, rf.
    pub imputer: String,
    /// Explicit Lasso penalties; 60 log-spaced values when absent.
    pub lambda_grid: Option<Vec<f64>>,
    pub n_estimators: Option<Vec<usize>>,
    /// `null` entries mean unlimited depth.
    pub max_depth: Option<Vec<Option<usize>>>,
    pub max_features: Option<Vec<usize>>,
    pub out: PathBuf,
    /// "exact", "sampled", or "auto" (exact when the enumeration fits the budget).
    pub shap_mode: String,
    pub shap_budget: f64,
    pub ice_grid: usize,
    pub pdp_grid: usize,
    pub select_repeats: usize,
    pub select_folds: usize,
    pub tune_folds: usize,
    pub impute_outer: usize,
    pub impute_inner: usize,
    pub strict: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            schema: None,
            target: "d_resEffe".into(),
            group: "Gender".into(),
            tau: 0.9,
            seed: None,
            imputer: "auto".into(),
            lambda_grid: None,
            n_estimators: None,
            max_depth: None,
            max_features: None,
            out: PathBuf::from("run"),
            shap_mode: "auto".into(),
            shap_budget: 1e9,
            ice_grid: 20,
            pdp_grid: 15,
            select_repeats: 10,
            select_folds: 3,
            tune_folds: 4,
            impute_outer: 4,
            impute_inner: 3,
            strict: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        QuantileLevel::new(self.tau)?;
        if self.seed.is_none() {
            return Err(Error::Validation("config needs an explicit seed".into()));
        }
        if self.input.is_none() {
            return Err(Error::Validation("config needs an input CSV".into()));
        }
        if self.imputer != "auto" {
            self.imputer.parse::<ImputeMethod>()?;
        }
        if !["auto", "exact", "sampled"].contains(&self.shap_mode.as_str()) {
            return Err(Error::Validation(format!("unknown shap_mode '{}'", self.shap_mode)));
        }
        for (k, v) in [
            ("select_folds", self.select_folds),
            ("select_repeats", self.select_repeats),
            ("tune_folds", self.tune_folds),
            ("impute_outer", self.impute_outer),
            ("impute_inner", self.impute_inner),
            ("ice_grid", self.ice_grid),
            ("pdp_grid", self.pdp_grid),
        ] {
            if v == 0 {
                return Err(Error::Validation(format!("{k} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn tau_level(&self) -> Result<QuantileLevel> {
        QuantileLevel::new(self.tau)
    }

    pub fn load_schema(&self) -> Result<Schema> {
        let schema = match &self.schema {
            Some(p) => Schema::from_json_file(p)?,
            None => Schema::long_jump(),
        };
        match schema.group_column() {
            Some(g) if g.name == self.group => Ok(schema),
            Some(g) => Err(Error::Validation(format!(
                "schema group column is '{}', config says '{}'",
                g.name, self.group
            ))),
            None => Err(Error::Validation(format!("schema has no group column '{}'", self.group))),
        }
    }

    pub fn load_data(&self) -> Result<TabularDataset> {
        let input = self.input.as_ref().ok_or_else(|| Error::Validation("no input CSV".into()))?;
        TabularDataset::load_csv(input, &self.load_schema()?)
    }

    /// Configured forest grid, falling back to the default for `p` features.
    pub fn hyper_grid(&self, p: usize) -> HyperGrid {
        let d = HyperGrid::default_for(p);
        HyperGrid {
            n_estimators: self.n_estimators.clone().unwrap_or(d.n_estimators),
            max_depth: self.max_depth.clone().unwrap_or(d.max_depth),
            max_features: self
                .max_features
                .as_ref()
                .map(|m| m.iter().copied().filter(|&v| v <= p).collect())
                .unwrap_or(d.max_features),
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: String,
    pub group: String,
    pub measured: String,
    pub target: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRun {
    pub group: String,
    pub n_rows: usize,
    pub n_target_rows: usize,
    pub seed: u64,
    pub imputer: String,
    pub impute_mse: BTreeMap<String, f64>,
    pub selected: Vec<String>,
    pub lambda: f64,
    pub s: f64,
    pub tuned: Hyper,
    pub cv_pinball: f64,
    pub shap_mode: ShapMode,
    pub shap_top: Vec<(String, f64)>,
    pub shap_max_additivity_gap: f64,
    pub best_row: usize,
    pub best_top: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub groups: Vec<GroupRun>,
    pub acceptance: Vec<Check>,
    /// Paths relative to the run directory, sorted.
    pub artifacts: Vec<String>,
    /// Wall-clock seconds per stage; the only field that varies between runs.
    pub elapsed_seconds: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn all_pass(&self) -> bool {
        self.acceptance.iter().all(|c| c.pass)
    }

    pub fn acceptance_table(&self) -> String {
        let mut s = String::new();
        for c in &self.acceptance {
            s.push_str(&format!(
                "{:<4} {:<6} {:<34} measured {:<28} target {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.group,
                c.criterion,
                c.measured,
                c.target
            ));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Helpers shared with the CLI
// ---------------------------------------------------------------------------

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Write { path: path.to_path_buf(), source })
}

pub fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|source| Error::Write { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

pub fn quantile_target(tau: QuantileLevel) -> PredictionTarget {
    PredictionTarget::Quantile { tau, interp: QuantileInterp::Lower }
}

pub fn shap_plot(report: &ShapReport) -> PlotData {
    PlotData::Bar {
        title: format!("Mean |SHAP| ({})", report.target),
        labels: report.ranking.iter().map(|&j| report.feature_names[j].clone()).collect(),
        values: report.ranking.iter().map(|&j| report.mean_abs[j]).collect(),
    }
}

pub fn waterfall_plot(w: &Waterfall) -> PlotData {
    PlotData::Waterfall { base: w.base, prediction: w.prediction, contributions: w.contributions.clone() }
}

pub fn ice_plot(g: &IceGrid) -> PlotData {
    PlotData::Ice {
        feature: g.feature_name.clone(),
        grid: g.grid.clone(),
        curves: g.curves.clone(),
        pdp: g.pdp.clone(),
        markers: g.markers.clone(),
    }
}

pub fn pdp2_plot(s: &PdpSurface) -> PlotData {
    PlotData::Pdp2 {
        features: [s.feature_names.0.clone(), s.feature_names.1.clone()],
        grid_a: s.grid_a.clone(),
        grid_b: s.grid_b.clone(),
        surface: s.surface.clone(),
        points: s.points.clone(),
    }
}

pub fn path_plot(sel: &Selection) -> PlotData {
    PlotData::Path {
        s: sel.path.iter().map(|p| p.s).collect(),
        loss: sel.path.iter().map(|p| p.mean_loss).collect(),
        nonzero: sel.path.iter().map(|p| p.nonzero_count).collect(),
        chosen: Some(sel.chosen),
        loss_label: match sel.loss {
            Loss::Pinball => "CV pinball loss".into(),
            Loss::Squared => "CV squared error".into(),
        },
    }
}

/// Number of coalition evaluations exact SHAP would need over `x` x `background`.
pub fn exact_shap_cost(model: &ForestModel<'_>, x: &[Vec<f64>], background: &[Vec<f64>]) -> f64 {
    use crate::explain::Model;
    let mut total = 0.0;
    for r in x {
        for b in background {
            let h = model.hybrid(r, b);
            total += (h.players().len() as f64).exp2();
        }
    }
    total
}

/// Resolve `auto` by cost; `exact` above the feature cap becomes an error later.
pub fn choose_shap_mode(mode: &str, model: &ForestModel<'_>, x: &[Vec<f64>], budget: f64) -> ShapMode {
    match mode {
        "exact" => ShapMode::Exact,
        "sampled" => ShapMode::Sampled,
        _ if model.forest.n_features() > MAX_EXACT_FEATURES => ShapMode::Sampled,
        _ if exact_shap_cost(model, x, x) <= budget => ShapMode::Exact,
        _ => ShapMode::Sampled,
    }
}

/// Impute with `method` after dropping columns that have no observed value.
/// Returns the filled data, imputer warnings, and the dropped column names.
pub fn impute_observed(d: &TabularDataset, method: ImputeMethod, seed: u64) -> Result<(TabularDataset, Vec<String>, Vec<String>)> {
    let empty: Vec<String> = (0..d.n_cols())
        .filter(|&j| d.observed(j).is_empty())
        .map(|j| d.columns()[j].name.clone())
        .collect();
    let base = d.drop_columns(&empty)?;
    let opts = ImputeOptions { seed, ..ImputeOptions::default() };
    let (imp, filled) = fit_transform(&base, method, &opts)?;
    Ok((filled, imp.warnings, empty))
}

/// Squared-loss Lasso selection on the combined data (with the female
/// indicator), then on men and women separately: 4 folds, one repeat.
/// `d` must be complete in every feature column.
pub fn supplement_select(d: &TabularDataset, target: &str, seed: u64) -> Result<Vec<(String, Selection)>> {
    let women = d
        .group_labels()
        .iter()
        .flatten()
        .find(|l| canonical_gender(l) == Some("women"))
        .cloned()
        .ok_or_else(|| Error::Validation("no rows labelled women".into()))?;
    let combined = d.add_indicator(crate::cv::FEMALE_INDICATOR, &women)?;
    let mut sets = vec![("combined".to_string(), combined)];
    for (label, g) in d.split_by_group()? {
        if let Some(c) = canonical_gender(&label) {
            sets.push((c.to_string(), g));
        }
    }
    let tau = QuantileLevel::new(0.5)?;
    sets.into_iter()
        .enumerate()
        .map(|(i, (name, data))| {
            let mut cfg = SelectConfig::new(Loss::Squared, tau, derive_seed(seed, "supplement-select", &[i as u64]));
            cfg.folds = 4;
            cfg.repeats = 1;
            let feats = data.names_of_kind(ColumnKind::Feature);
            Ok((name, select_features(&data, &feats, target, &cfg)?))
        })
        .collect()
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

struct Run<'a> {
    cfg: &'a PipelineConfig,
    root: PathBuf,
    artifacts: Vec<String>,
    elapsed: BTreeMap<String, f64>,
}

impl Run<'_> {
    fn rel(&mut self, path: &Path) {
        let r = path.strip_prefix(&self.root).unwrap_or(path);
        self.artifacts.push(r.to_string_lossy().replace('\\', "/"));
    }

    fn plot(&mut self, data: &PlotData, path: PathBuf) -> Result<()> {
        emit_plot(data, &path)?;
        self.rel(&path);
        let d = crate::plot::data_path(&path);
        self.rel(&d);
        Ok(())
    }

    fn text(&mut self, path: PathBuf, text: &str) -> Result<()> {
        write_text(&path, text)?;
        self.rel(&path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, path: PathBuf, v: &T) -> Result<()> {
        write_json(&path, v)?;
        self.rel(&path);
        Ok(())
    }

    fn timed<T>(&mut self, key: String, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let stage = key.clone();
        let out = f(self).map_err(Error::stage(stage));
        self.elapsed.insert(key, t0.elapsed().as_secs_f64());
        out
    }
}

/// Run every stage for every group and write `manifest.json` into `cfg.out`.
pub fn reproduce(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let tau = cfg.tau_level()?;
    let data = cfg.load_data()?;
    data.column_index(&cfg.target)?;
    fs::create_dir_all(&cfg.out).map_err(|source| Error::Write { path: cfg.out.clone(), source })?;
    let mut run = Run { cfg, root: cfg.out.clone(), artifacts: Vec::new(), elapsed: BTreeMap::new() };

    let groups = data.split_by_group()?;
    run.timed("stats".into(), |run| {
        let stats: Vec<(String, _)> = groups.iter().map(|(g, d)| (g.clone(), d.summarize())).collect();
        run.text(run.root.join("stats.txt"), &crate::dataset::format_stats_report(&stats))?;
        let mut buf = Vec::new();
        crate::dataset::write_stats_csv(&stats, &mut buf)?;
        run.text(run.root.join("stats.csv"), &String::from_utf8_lossy(&buf))?;
        for (g, d) in &groups {
            let t = d.column_index(&cfg.target)?;
            let values = d.observed(t);
            if values.is_empty() {
                continue;
            }
            let hist = PlotData::Hist { label: cfg.target.clone(), values, bins: 12, quantiles: vec![0.1, 0.5, 0.9] };
            run.plot(&hist, run.root.join(format!("hist_{}.svg", file_stem(g))))?;
        }
        Ok(())
    })?;

    let mut runs = Vec::new();
    let mut checks = Vec::new();
    for (gi, (label, d)) in groups.iter().enumerate() {
        let (g, c) = run_group(&mut run, gi, label, d, tau)?;
        runs.push(g);
        checks.extend(c);
    }

    run.artifacts.sort();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        groups: runs,
        acceptance: checks,
        artifacts: run.artifacts.clone(),
        elapsed_seconds: run.elapsed.clone(),
    };
    write_json(&cfg.out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn run_group(
    run: &mut Run<'_>,
    gi: usize,
    label: &str,
    d: &TabularDataset,
    tau: QuantileLevel,
) -> Result<(GroupRun, Vec<Check>)> {
    let cfg = run.cfg;
    let gseed = derive_seed(cfg.seed(), "reproduce-group", &[gi as u64]);
    let dir = run.root.join(file_stem(label));
    fs::create_dir_all(&dir).map_err(|source| Error::Write { path: dir.clone(), source })?;
    let key = |s: &str| format!("{label}/{s}");
    let mut warnings = Vec::new();
    let target = cfg.target.as_str();

    // impute-eval and impute
    let features_all = d.names_of_kind(ColumnKind::Feature);
    let eval = if cfg.imputer == "auto" {
        let ecfg = ImputeEvalConfig {
            outer_k: cfg.impute_outer,
            inner_k: cfg.impute_inner,
            ..ImputeEvalConfig::new(derive_seed(gseed, "impute-eval", &[]))
        };
        let rep = run.timed(key("impute-eval"), |run| {
            let rep = evaluate_imputers(d, target, &ecfg)?;
            run.text(dir.join("impute_eval.txt"), &rep.to_text())?;
            run.json(dir.join("impute_eval.json"), &rep)?;
            Ok(rep)
        })?;
        warnings.extend(rep.warnings.iter().cloned());
        Some(rep)
    } else {
        None
    };
    let method = match &eval {
        Some(rep) => rep.best_mse,
        None => cfg.imputer.parse()?,
    };
    let tcol = d.column_index(target)?;
    let target_rows: Vec<usize> = (0..d.n_rows()).filter(|&i| !d.is_missing(i, tcol)).collect();
    let imputed = run.timed(key("impute"), |run| {
        let (filled, warn, empty) = impute_observed(d, method, derive_seed(gseed, "impute", &[]))?;
        let filled = filled.select_rows(&target_rows)?;
        let path = dir.join("imputed.csv");
        filled.save_csv(&path)?;
        run.rel(&path);
        Ok((filled, warn, empty))
    })?;
    let (imputed, imp_warn, dropped) = imputed;
    warnings.extend(imp_warn);
    warnings.extend(dropped.iter().map(|c| format!("dropped '{c}' (no observed values)")));
    let candidates: Vec<String> = features_all.into_iter().filter(|f| !dropped.contains(f)).collect();

    // select
    let sel = run.timed(key("select"), |run| {
        let mut scfg = SelectConfig::new(Loss::Pinball, tau, derive_seed(gseed, "select", &[]));
        scfg.grid = cfg.lambda_grid.clone();
        scfg.repeats = cfg.select_repeats;
        scfg.folds = cfg.select_folds;
        let sel = select_features(&imputed, &candidates, target, &scfg)?;
        let mut buf = Vec::new();
        sel.write_path_csv(&mut buf)?;
        run.text(dir.join("path.csv"), &String::from_utf8_lossy(&buf))?;
        run.plot(&path_plot(&sel), dir.join("path.svg"))?;
        Ok(sel)
    })?;
    let selected = if sel.selected.is_empty() {
        warnings.push("selection kept no features; falling back to all candidates".into());
        candidates.clone()
    } else {
        sel.selected.clone()
    };

    // tune and train
    let (_, x, y) = imputed.supervised(&selected, target)?;
    let tuned = run.timed(key("tune"), |run| {
        let grid = cfg.hyper_grid(selected.len());
        let t = tune(&x, &y, &selected, &grid, TuneObjective::Pinball { tau }, cfg.tune_folds, derive_seed(gseed, "tune", &[]))?;
        let mut s = String::from("n_estimators,max_depth,max_features,cv_pinball\n");
        for (h, v) in &t.scores {
            let depth = h.max_depth.map_or("none".to_string(), |v| v.to_string());
            s.push_str(&format!("{},{},{},{}\n", h.n_estimators, depth, h.max_features, v));
        }
        run.text(dir.join("tune.csv"), &s)?;
        Ok(t)
    })?;
    let forest = run.timed(key("train"), |run| {
        let f = QuantileForest::fit(&x, &y, &selected, tuned.best, derive_seed(gseed, "train", &[]))?;
        let path = dir.join("model.json");
        f.save(&path)?;
        run.rel(&path);
        Ok(f)
    })?;

    // explain
    let model = ForestModel::new(&forest, quantile_target(tau));
    let mode = choose_shap_mode(&cfg.shap_mode, &model, &x, cfg.shap_budget);
    let shap = run.timed(key("shap"), |run| {
        let rep = shap_global(&model, &selected, &x, &x, mode, derive_seed(gseed, "shap", &[]))?;
        let mut buf = Vec::new();
        rep.write_beeswarm_csv(&x, &mut buf)?;
        run.text(dir.join("shap.csv"), &String::from_utf8_lossy(&buf))?;
        run.plot(&shap_plot(&rep), dir.join("shap_bar.svg"))?;
        Ok(rep)
    })?;
    let best_row = (0..y.len()).fold(0, |b, i| if y[i] > y[b] { i } else { b });
    let water = run.timed(key("shap-individual"), |run| {
        let w = if mode == ShapMode::Exact {
            shap_individual(&model, &selected, &x[best_row], &x)?
        } else {
            let s = crate::explain::shap_sampled(&model, &x[best_row], &x, 512, derive_seed(gseed, "shap-best", &[]))?;
            let mut order: Vec<usize> = (0..s.phi.len()).collect();
            order.sort_by(|&a, &b| s.phi[b].abs().total_cmp(&s.phi[a].abs()).then(a.cmp(&b)));
            Waterfall {
                base: s.base,
                prediction: s.prediction,
                contributions: order.into_iter().map(|j| (selected[j].clone(), s.phi[j])).collect(),
            }
        };
        run.json(dir.join("shap_best.json"), &w)?;
        run.plot(&waterfall_plot(&w), dir.join("waterfall.svg"))?;
        Ok(w)
    })?;

    let canon = canonical_gender(label);
    let (ice_ref, pdp_ref): (&[&str], &[(&str, &str)]) = match canon {
        Some("men") => (tg::ICE_MEN, tg::PDP_MEN),
        Some("women") => (tg::ICE_WOMEN, tg::PDP_WOMEN),
        _ => (&[], &[]),
    };
    let top3: Vec<String> = shap.top(3).into_iter().map(str::to_string).collect();
    let mut ice_feats: Vec<String> =
        ice_ref.iter().filter(|f| selected.iter().any(|s| s == *f)).map(|f| f.to_string()).collect();
    for f in &top3 {
        if ice_feats.len() >= 3 {
            break;
        }
        if !ice_feats.contains(f) {
            ice_feats.push(f.clone());
        }
    }
    let mut pairs: Vec<(String, String)> = pdp_ref
        .iter()
        .filter(|(a, b)| selected.iter().any(|s| s == a) && selected.iter().any(|s| s == b))
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    for (i, a) in top3.iter().enumerate() {
        for b in &top3[i + 1..] {
            if pairs.len() < 3 && !pairs.iter().any(|p| (&p.0, &p.1) == (a, b) || (&p.0, &p.1) == (b, a)) {
                pairs.push((a.clone(), b.clone()));
            }
        }
    }
    for f in ice_ref.iter().filter(|f| !ice_feats.iter().any(|s| s == *f)) {
        warnings.push(format!("ICE feature '{f}' not selected; skipped"));
    }
    let idx = |n: &str| selected.iter().position(|s| s == n).expect("feature from the selected set");
    let ices = run.timed(key("ice"), |run| {
        let mut out = Vec::new();
        for f in &ice_feats {
            let g = ice_1d(&model, &selected, &x, idx(f), cfg.ice_grid)?;
            let mut buf = Vec::new();
            g.write_csv(&mut buf)?;
            run.text(dir.join(format!("ice_{}.csv", file_stem(f))), &String::from_utf8_lossy(&buf))?;
            run.plot(&ice_plot(&g), dir.join(format!("ice_{}.svg", file_stem(f))))?;
            out.push(g);
        }
        Ok(out)
    })?;
    let surfaces = run.timed(key("pdp2"), |run| {
        let mut out = Vec::new();
        for (a, b) in &pairs {
            let s = pdp_2d(&model, &selected, &x, idx(a), idx(b), cfg.pdp_grid)?;
            let stem = format!("pdp2_{}__{}", file_stem(a), file_stem(b));
            let mut buf = Vec::new();
            s.write_csv(&mut buf)?;
            run.text(dir.join(format!("{stem}.csv")), &String::from_utf8_lossy(&buf))?;
            run.plot(&pdp2_plot(&s), dir.join(format!("{stem}.svg")))?;
            out.push(s);
        }
        Ok(out)
    })?;
    for g in &ices {
        warnings.extend(g.warnings.iter().cloned());
    }
    for s in &surfaces {
        warnings.extend(s.warnings.iter().cloned());
    }

    let impute_mse: BTreeMap<String, f64> = eval
        .as_ref()
        .map(|r| r.methods.iter().map(|m| (m.method.label().to_string(), m.mse)).collect())
        .unwrap_or_default();
    let chosen = sel.chosen_point();
    let group_run = GroupRun {
        group: label.to_string(),
        n_rows: d.n_rows(),
        n_target_rows: target_rows.len(),
        seed: gseed,
        imputer: method.label().to_string(),
        impute_mse,
        selected: selected.clone(),
        lambda: chosen.lambda,
        s: chosen.s,
        tuned: tuned.best,
        cv_pinball: tuned.best_score,
        shap_mode: mode,
        shap_top: shap.ranking.iter().take(10).map(|&j| (selected[j].clone(), shap.mean_abs[j])).collect(),
        shap_max_additivity_gap: shap.max_additivity_gap(),
        best_row: target_rows[best_row],
        best_top: water.contributions.iter().take(3).map(|c| c.0.clone()).collect(),
        warnings,
    };
    let checks = canon
        .map(|c| group_checks(c, &group_run, eval.as_ref().map(|r| r.best_mse), &sel, &ices, &surfaces))
        .unwrap_or_default();
    Ok((group_run, checks))
}

fn check(criterion: &str, group: &str, measured: String, target: String, pass: bool) -> Check {
    Check { criterion: criterion.into(), group: group.into(), measured, target, pass }
}

fn group_checks(
    sex: &str,
    g: &GroupRun,
    best_imputer: Option<ImputeMethod>,
    sel: &Selection,
    ices: &[IceGrid],
    surfaces: &[PdpSurface],
) -> Vec<Check> {
    let men = sex == "men";
    let mut out = Vec::new();
    if let Some(best) = best_imputer {
        let (want, target_mse) =
            if men { (ImputeMethod::ForestIterative, tg::IMPUTE_MEN_RF_MSE) } else { (ImputeMethod::Knn, tg::IMPUTE_WOMEN_KNN_MSE) };
        out.push(check("imputer winner", sex, best.label().into(), want.label().into(), best == want));
        let mse = g.impute_mse.get(want.label()).copied().unwrap_or(f64::NAN);
        out.push(check(
            "imputer MSE",
            sex,
            format!("{mse:.4}"),
            format!("{target_mse} +/- 20%"),
            tg::within_rel(mse, target_mse, tg::REL_TOLERANCE),
        ));
    }
    let (lo, hi) = if men { tg::SELECTED_COUNT_MEN } else { tg::SELECTED_COUNT_WOMEN };
    let n = g.selected.len();
    out.push(check("selected count", sex, n.to_string(), format!("{lo}..={hi}"), (lo..=hi).contains(&n)));
    let reference = if men { tg::SELECTED_MEN } else { tg::SELECTED_WOMEN };
    let j = tg::jaccard(&g.selected, reference);
    out.push(check("selection Jaccard", sex, format!("{j:.3}"), format!(">= {}", tg::SELECTION_JACCARD), j >= tg::SELECTION_JACCARD));
    let first = sel.path.iter().min_by(|a, b| a.s.total_cmp(&b.s)).expect("path is never empty");
    let opt = sel.chosen_point();
    out.push(check(
        "loss at s->0 > loss at optimum",
        sex,
        format!("{:.4} vs {:.4}", first.mean_loss, opt.mean_loss),
        "strictly greater".into(),
        first.mean_loss > opt.mean_loss,
    ));
    let (dlo, dhi) = tg::TUNE_DEPTH_RANGE;
    let depth = g.tuned.max_depth;
    out.push(check(
        "tuned max_depth",
        sex,
        depth.map_or("none".into(), |v| v.to_string()),
        format!("{dlo}..={dhi}"),
        depth.is_some_and(|v| (dlo..=dhi).contains(&v)),
    ));
    let target_pin = if men { tg::TUNE_PINBALL_MEN } else { tg::TUNE_PINBALL_WOMEN };
    out.push(check(
        "CV pinball",
        sex,
        format!("{:.4}", g.cv_pinball),
        format!("{target_pin} +/- 20%"),
        tg::within_rel(g.cv_pinball, target_pin, tg::REL_TOLERANCE),
    ));
    if g.shap_mode == ShapMode::Exact {
        out.push(check(
            "SHAP additivity",
            sex,
            format!("{:.2e}", g.shap_max_additivity_gap),
            "<= 1e-9".into(),
            g.shap_max_additivity_gap <= 1e-9,
        ));
    }
    let top: Vec<&str> = g.shap_top.iter().map(|t| t.0.as_str()).collect();
    if men {
        let (name, v) = g.shap_top.first().cloned().unwrap_or_default();
        let (a, b) = tg::SHAP_MEN_TOP1_RANGE;
        out.push(check(
            "SHAP top-1",
            sex,
            format!("{name} ({v:.3})"),
            format!("{} in [{a}, {b}]", tg::SHAP_MEN_TOP1),
            name == tg::SHAP_MEN_TOP1 && (a..=b).contains(&v),
        ));
        let best = g.best_top.first().map(String::as_str).unwrap_or("");
        out.push(check("best jump top-1", sex, best.into(), tg::SHAP_MEN_TOP1.into(), best == tg::SHAP_MEN_TOP1));
    } else {
        let mut got: Vec<&str> = top.iter().take(3).copied().collect();
        got.sort_unstable();
        let mut want = tg::SHAP_WOMEN_TOP3.to_vec();
        want.sort_unstable();
        out.push(check("SHAP top-3 set", sex, got.join(","), want.join(","), got == want));
        let ok = tg::SHAP_BEST_WOMEN_TOP3_CONTAINS.iter().all(|f| g.best_top.iter().any(|b| b == f));
        out.push(check(
            "best jump top-3",
            sex,
            g.best_top.join(","),
            format!("contains {}", tg::SHAP_BEST_WOMEN_TOP3_CONTAINS.join(",")),
            ok,
        ));
    }
    let gap = ices
        .iter()
        .flat_map(|g| {
            (0..g.grid.len()).map(move |k| {
                let m = g.curves.iter().map(|c| c[k]).sum::<f64>() / g.curves.len() as f64;
                (m - g.pdp[k]).abs()
            })
        })
        .fold(0.0, f64::max);
    out.push(check("pdp == mean(ICE)", sex, format!("{gap:.2e}"), "<= 1e-12".into(), gap <= 1e-12));
    if men {
        match ices.iter().find(|g| g.feature_name == "v_H_S1") {
            Some(ice) => {
                let (below, above) = pdp_slopes(&ice.grid, &ice.pdp, tg::KINK_V_H_S1);
                let pass = matches!((below, above), (Some(b), Some(a)) if b > a);
                out.push(check(
                    "v_H_S1 slope below > above 9.6",
                    sex,
                    format!("{below:.4?} vs {above:.4?}"),
                    "below > above".into(),
                    pass,
                ));
            }
            None => out.push(check("v_H_S1 slope below > above 9.6", sex, "not selected".into(), "below > above".into(), false)),
        }
        match surfaces.iter().find(|s| s.feature_names == ("v_H_S1".into(), "a_knee_TD".into())) {
            Some(s) => {
                let (pass, measured) = quadrant_test(s, tg::KINK_V_H_S1, tg::STEP_A_KNEE_TD);
                out.push(check("quadrant (9.6, 169) highest", sex, measured, "hi/hi > others".into(), pass));
            }
            None => out.push(check("quadrant (9.6, 169) highest", sex, "pair not selected".into(), "hi/hi > others".into(), false)),
        }
    }
    out
}

/// High/high quadrant mean strictly exceeds every other quadrant's mean.
pub fn quadrant_test(s: &PdpSurface, a0: f64, b0: f64) -> (bool, String) {
    let q = |ah, bh| s.quadrant_mean(a0, b0, ah, bh);
    let hh = q(true, true);
    let others = [q(false, false), q(false, true), q(true, false)];
    let pass = match hh {
        Some(h) => others.iter().all(|o| o.is_none_or(|o| h > o)) && others.iter().any(Option::is_some),
        None => false,
    };
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    (pass, format!("hh {} ll {} lh {} hl {}", fmt(hh), fmt(others[0]), fmt(others[1]), fmt(others[2])))
}
