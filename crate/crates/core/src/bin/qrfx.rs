use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qrfx::cv::{compare_combined_vs_split, CompareConfig, FeatureSets};
use qrfx::dataset::{format_stats_report, write_stats_csv, ColumnKind, Schema, TabularDataset};
use qrfx::explain::{ice_1d, pdp_2d, shap_global, ForestModel};
use qrfx::forest::{tune, Hyper, HyperGrid, PredictionTarget, QuantileForest, QuantileInterp, TuneObjective};
use qrfx::impute::{evaluate_imputers, ImputeEvalConfig, ImputeMethod};
use qrfx::l1::{select_features, Loss, SelectConfig};
use qrfx::metrics::QuantileLevel;
use qrfx::pipeline::{
    choose_shap_mode, ice_plot, impute_observed, path_plot, pdp2_plot, reproduce, shap_plot, supplement_select,
    write_json, write_text, PipelineConfig,
};
use qrfx::plot::emit_plot;
use qrfx::targets as tg;
use qrfx::{Error, Result};

#[derive(Parser)]
#[command(name = "qrfx", version, about = "Quantile regression forests, pinball Lasso selection and SHAP/PDP/ICE")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "QRFX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Input {
    csv: PathBuf,
    /// JSON list of {name, unit, kind}; the built-in long-jump schema otherwise.
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl Input {
    fn load(&self) -> Result<TabularDataset> {
        exists(&self.csv)?;
        let schema = match &self.schema {
            Some(p) => Schema::from_json_file(p)?,
            None => Schema::long_jump(),
        };
        TabularDataset::load_csv_partial(&self.csv, &schema)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-group summary table.
    Stats {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "Gender")]
        group_col: String,
        #[arg(long, default_value = "stats.csv")]
        out: PathBuf,
    },
    /// Cross-validated comparison of the four imputers.
    ImputeEval {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "d_resEffe")]
        target: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "impute_report.json")]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        outer_k: usize,
        #[arg(long, default_value_t = 3)]
        inner_k: usize,
    },
    /// Fill missing cells.
    Impute {
        #[command(flatten)]
        input: Input,
        /// mean, knn, br or rf
        #[arg(long)]
        method: ImputeMethod,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated Lasso path.
    Select {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "d_resEffe")]
        target: String,
        #[arg(long, default_value_t = 0.9)]
        tau: f64,
        /// pinball or squared
        #[arg(long, default_value = "pinball")]
        loss: String,
        #[arg(long)]
        seed: u64,
        /// Candidate features (comma separated); every feature column otherwise.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 3)]
        folds: usize,
        #[arg(long, default_value = "path.csv")]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Grid search over forest hyperparameters.
    Tune {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        fit: FitArgs,
        /// Score the mean prediction by MSE instead of the quantile by pinball loss.
        #[arg(long)]
        mse: bool,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        #[arg(long, value_delimiter = ',')]
        n_estimators: Option<Vec<usize>>,
        /// `none` means unlimited.
        #[arg(long, value_delimiter = ',')]
        max_depth: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        max_features: Option<Vec<usize>>,
        #[arg(long, default_value = "tune.json")]
        out: PathBuf,
    },
    /// Fit one forest and save it as JSON.
    Train {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, default_value_t = 100)]
        n_estimators: usize,
        /// `none` means unlimited.
        #[arg(long, default_value = "3")]
        max_depth: String,
        /// Defaults to every feature.
        #[arg(long)]
        max_features: Option<usize>,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Predict with a saved forest.
    Predict {
        model: PathBuf,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        target: TargetArgs,
        /// CSV output; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Explain(Explain),
    #[command(subcommand)]
    Supplement(Supplement),
    /// Whole per-group pipeline with a manifest and acceptance table.
    Reproduce(Box<ReproduceArgs>),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value = "d_resEffe")]
    target: String,
    /// Comma separated; every feature column in the CSV otherwise.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    #[arg(long, default_value_t = 0.9)]
    tau: f64,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct TargetArgs {
    #[arg(long, default_value_t = 0.9)]
    tau: f64,
    /// Conditional mean instead of a quantile.
    #[arg(long)]
    mean: bool,
    #[arg(long, default_value = "lower")]
    quantile_interp: String,
}

impl TargetArgs {
    fn get(&self) -> Result<PredictionTarget> {
        if self.mean {
            return Ok(PredictionTarget::Mean);
        }
        let interp = match self.quantile_interp.as_str() {
            "lower" => QuantileInterp::Lower,
            "linear" => QuantileInterp::Linear,
            o => return Err(Error::InvalidArgument(format!("unknown --quantile-interp '{o}'"))),
        };
        Ok(PredictionTarget::Quantile { tau: QuantileLevel::new(self.tau)?, interp })
    }
}

#[derive(Subcommand)]
enum Explain {
    /// Shapley values for every row, with a mean |phi| bar chart.
    Shap {
        model: PathBuf,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        target: TargetArgs,
        /// exact, sampled or auto
        #[arg(long, default_value = "auto")]
        mode: String,
        #[arg(long, default_value_t = 1e9)]
        budget: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "shap.csv")]
        out: PathBuf,
        #[arg(long)]
        bar: Option<PathBuf>,
    },
    /// ICE curves and their mean.
    Ice {
        model: PathBuf,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long)]
        feature: String,
        #[arg(long, default_value_t = 20)]
        grid: usize,
        #[arg(long, default_value = "ice.csv")]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Two-feature partial dependence surface.
    Pdp2 {
        model: PathBuf,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, value_delimiter = ',', num_args = 1)]
        features: Vec<String>,
        #[arg(long, default_value_t = 15)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "pdp2.svg")]
        plot: PathBuf,
    },
}

#[derive(Subcommand)]
enum Supplement {
    /// Combined versus sex-specific mean forests.
    Compare {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "d_resEffe")]
        target: String,
        #[arg(long)]
        seed: u64,
        /// Fill missing cells on the combined data first (mean, knn, br, rf).
        #[arg(long)]
        impute: Option<ImputeMethod>,
        #[arg(long, value_delimiter = ',')]
        features_combined: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        features_men: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        features_women: Option<Vec<String>>,
        #[arg(long, default_value = "tableS3.json")]
        out: PathBuf,
    },
    /// Squared-loss Lasso on combined, men and women.
    Select {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "d_resEffe")]
        target: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        impute: Option<ImputeMethod>,
        /// Directory for path_<set>.csv/.svg and selection.json.
        #[arg(long, default_value = "supplement")]
        out: PathBuf,
    },
}

/// Every flag overrides the config key of the same name.
#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    imputer: Option<String>,
    #[arg(long = "lambda_grid", visible_alias = "lambda-grid", value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long = "n_estimators", visible_alias = "n-estimators", value_delimiter = ',')]
    n_estimators: Option<Vec<usize>>,
    #[arg(long = "max_depth", visible_alias = "max-depth", value_delimiter = ',')]
    max_depth: Option<Vec<String>>,
    #[arg(long = "max_features", visible_alias = "max-features", value_delimiter = ',')]
    max_features: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "shap_mode", visible_alias = "shap-mode")]
    shap_mode: Option<String>,
    #[arg(long = "shap_budget", visible_alias = "shap-budget")]
    shap_budget: Option<f64>,
    #[arg(long = "ice_grid", visible_alias = "ice-grid")]
    ice_grid: Option<usize>,
    #[arg(long = "pdp_grid", visible_alias = "pdp-grid")]
    pdp_grid: Option<usize>,
    #[arg(long = "select_repeats", visible_alias = "select-repeats")]
    select_repeats: Option<usize>,
    #[arg(long = "select_folds", visible_alias = "select-folds")]
    select_folds: Option<usize>,
    #[arg(long = "tune_folds", visible_alias = "tune-folds")]
    tune_folds: Option<usize>,
    #[arg(long = "impute_outer", visible_alias = "impute-outer")]
    impute_outer: Option<usize>,
    #[arg(long = "impute_inner", visible_alias = "impute-inner")]
    impute_inner: Option<usize>,
    /// Exit with code 4 when any acceptance check fails.
    #[arg(long)]
    strict: bool,
}

fn exists(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Validation(format!("no such file: {}", p.display())))
    }
}

fn parse_depths(v: &[String]) -> Result<Vec<Option<usize>>> {
    v.iter()
        .map(|s| match s.trim() {
            "none" | "null" => Ok(None),
            t => t.parse().map(Some).map_err(|_| Error::InvalidArgument(format!("bad max_depth '{t}'"))),
        })
        .collect()
}

impl ReproduceArgs {
    fn config(self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_json_file(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if self.$f.is_some() { c.$f = self.$f; } )* };
        }
        set!(target, group, tau, imputer, out, shap_mode, shap_budget, ice_grid, pdp_grid);
        set!(select_repeats, select_folds, tune_folds, impute_outer, impute_inner);
        set_opt!(input, schema, seed, lambda_grid, n_estimators, max_features);
        if let Some(d) = &self.max_depth {
            c.max_depth = Some(parse_depths(d)?);
        }
        c.strict |= self.strict;
        Ok(c)
    }
}

fn features_or_all(d: &TabularDataset, given: &[String], target: &str) -> Vec<String> {
    if given.is_empty() {
        d.names_of_kind(ColumnKind::Feature).into_iter().filter(|f| f != target).collect()
    } else {
        given.to_vec()
    }
}

fn load_model_rows(model: &Path, input: &Input) -> Result<(QuantileForest, Vec<Vec<f64>>)> {
    exists(model)?;
    let forest = QuantileForest::load(model)?;
    let x = input.load()?.matrix(forest.feature_names())?;
    Ok((forest, x))
}

fn csv_text(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

fn run(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Stats { input, group_col, out } => {
            let d = input.load()?;
            if d.group_column() != Some(group_col.as_str()) {
                return Err(Error::Validation(format!("no group column '{group_col}' in the CSV")));
            }
            let stats: Vec<_> = d.split_by_group()?.into_iter().map(|(g, d)| (g, d.summarize())).collect();
            print!("{}", format_stats_report(&stats));
            write_text(&out, &csv_text(|b| write_stats_csv(&stats, b))?)?;
        }
        Cmd::ImputeEval { input, target, seed, out, outer_k, inner_k } => {
            let cfg = ImputeEvalConfig { outer_k, inner_k, ..ImputeEvalConfig::new(seed) };
            let rep = evaluate_imputers(&input.load()?, &target, &cfg)?;
            print!("{}", rep.to_text());
            write_json(&out, &rep)?;
        }
        Cmd::Impute { input, method, seed, out } => {
            let (filled, warnings, dropped) = impute_observed(&input.load()?, method, seed)?;
            for w in warnings.iter().chain(&dropped) {
                eprintln!("warning: {w}");
            }
            filled.save_csv(&out)?;
        }
        Cmd::Select { input, target, tau, loss, seed, features, repeats, folds, out, plot } => {
            let d = input.load()?;
            let loss = match loss.as_str() {
                "pinball" => Loss::Pinball,
                "squared" => Loss::Squared,
                o => return Err(Error::InvalidArgument(format!("unknown --loss '{o}'"))),
            };
            let mut cfg = SelectConfig::new(loss, QuantileLevel::new(tau)?, seed);
            cfg.repeats = repeats;
            cfg.folds = folds;
            let sel = select_features(&d, &features_or_all(&d, &features, &target), &target, &cfg)?;
            let pt = sel.chosen_point();
            println!("lambda {:e}  s {:.4}  loss {:.5}", pt.lambda, pt.s, pt.mean_loss);
            println!("selected ({}): {}", sel.selected.len(), sel.selected.join(", "));
            write_text(&out, &csv_text(|b| sel.write_path_csv(b))?)?;
            if let Some(p) = plot {
                emit_plot(&path_plot(&sel), &p)?;
            }
        }
        Cmd::Tune { input, fit, mse, folds, n_estimators, max_depth, max_features, out } => {
            let d = input.load()?;
            let names = features_or_all(&d, &fit.features, &fit.target);
            let (_, x, y) = d.supervised(&names, &fit.target)?;
            let dflt = HyperGrid::default_for(names.len());
            let grid = HyperGrid {
                n_estimators: n_estimators.unwrap_or(dflt.n_estimators),
                max_depth: max_depth.map(|v| parse_depths(&v)).transpose()?.unwrap_or(dflt.max_depth),
                max_features: max_features.unwrap_or(dflt.max_features),
            };
            let objective =
                if mse { TuneObjective::Mse } else { TuneObjective::Pinball { tau: QuantileLevel::new(fit.tau)? } };
            let t = tune(&x, &y, &names, &grid, objective, folds, fit.seed)?;
            let b = t.best;
            println!(
                "best n_estimators {} max_depth {} max_features {}  score {:.5}",
                b.n_estimators,
                b.max_depth.map_or("none".into(), |v| v.to_string()),
                b.max_features,
                t.best_score
            );
            write_json(&out, &t)?;
        }
        Cmd::Train { input, fit, n_estimators, max_depth, max_features, out } => {
            QuantileLevel::new(fit.tau)?;
            let d = input.load()?;
            let names = features_or_all(&d, &fit.features, &fit.target);
            let (_, x, y) = d.supervised(&names, &fit.target)?;
            let depth = parse_depths(&[max_depth])?[0];
            let h = Hyper::new(n_estimators, depth, max_features.unwrap_or(names.len()));
            QuantileForest::fit(&x, &y, &names, h, fit.seed)?.save(&out)?;
        }
        Cmd::Predict { model, input, target, out } => {
            let (forest, x) = load_model_rows(&model, &input)?;
            let preds = forest.predict_rows(&x, target.get()?)?;
            let mut text = String::from("row,prediction\n");
            for (i, p) in preds.iter().enumerate() {
                text.push_str(&format!("{i},{p}\n"));
            }
            match out {
                Some(p) => write_text(&p, &text)?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
        }
        Cmd::Explain(e) => explain(e)?,
        Cmd::Supplement(s) => supplement(s)?,
        Cmd::Reproduce(args) => {
            let cfg = args.config()?;
            let m = reproduce(&cfg)?;
            print!("{}", m.acceptance_table());
            println!("manifest: {}", cfg.out.join("manifest.json").display());
            if cfg.strict && !m.all_pass() {
                return Ok(4);
            }
        }
    }
    Ok(0)
}

fn explain(e: Explain) -> Result<()> {
    let feature_index = |f: &QuantileForest, name: &str| {
        f.feature_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("model has no feature '{name}'")))
    };
    match e {
        Explain::Shap { model, input, target, mode, budget, seed, out, bar } => {
            let (forest, x) = load_model_rows(&model, &input)?;
            let m = ForestModel::new(&forest, target.get()?);
            if !["auto", "exact", "sampled"].contains(&mode.as_str()) {
                return Err(Error::InvalidArgument(format!("unknown --mode '{mode}'")));
            }
            let mode = choose_shap_mode(&mode, &m, &x, budget);
            let rep = shap_global(&m, forest.feature_names(), &x, &x, mode, seed)?;
            println!("base {:.5}  max additivity gap {:.2e}", rep.base_value, rep.max_additivity_gap());
            for &j in rep.ranking.iter().take(10) {
                println!("{:<20} {:.5}", rep.feature_names[j], rep.mean_abs[j]);
            }
            write_text(&out, &csv_text(|b| rep.write_beeswarm_csv(&x, b))?)?;
            if let Some(p) = bar {
                emit_plot(&shap_plot(&rep), &p)?;
            }
        }
        Explain::Ice { model, input, target, feature, grid, out, plot } => {
            let (forest, x) = load_model_rows(&model, &input)?;
            let m = ForestModel::new(&forest, target.get()?);
            let g = ice_1d(&m, forest.feature_names(), &x, feature_index(&forest, &feature)?, grid)?;
            g.warnings.iter().for_each(|w| eprintln!("warning: {w}"));
            write_text(&out, &csv_text(|b| g.write_csv(b))?)?;
            if let Some(p) = plot {
                emit_plot(&ice_plot(&g), &p)?;
            }
        }
        Explain::Pdp2 { model, input, target, features, grid, out, plot } => {
            let [a, b] = features.as_slice() else {
                return Err(Error::InvalidArgument("--features takes exactly two names".into()));
            };
            let (forest, x) = load_model_rows(&model, &input)?;
            let m = ForestModel::new(&forest, target.get()?);
            let s = pdp_2d(&m, forest.feature_names(), &x, feature_index(&forest, a)?, feature_index(&forest, b)?, grid)?;
            s.warnings.iter().for_each(|w| eprintln!("warning: {w}"));
            if let Some(o) = out {
                write_text(&o, &csv_text(|w| s.write_csv(w))?)?;
            }
            emit_plot(&pdp2_plot(&s), &plot)?;
        }
    }
    Ok(())
}

fn prepare(input: &Input, impute: Option<ImputeMethod>, seed: u64) -> Result<TabularDataset> {
    let d = input.load()?;
    match impute {
        Some(m) => Ok(impute_observed(&d, m, seed)?.0),
        None => Ok(d),
    }
}

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn supplement(s: Supplement) -> Result<()> {
    match s {
        Supplement::Compare { input, target, seed, impute, features_combined, features_men, features_women, out } => {
            let d = prepare(&input, impute, seed)?;
            let sets = FeatureSets {
                combined: features_combined.unwrap_or_else(|| owned(tg::SQUARED_COMBINED)),
                men: features_men.unwrap_or_else(|| owned(tg::SQUARED_MEN)),
                women: features_women.unwrap_or_else(|| owned(tg::SQUARED_WOMEN)),
            };
            let rep = compare_combined_vs_split(&d, &target, &sets, &CompareConfig::new(seed))?;
            print!("{}", rep.to_text());
            write_json(&out, &rep)?;
        }
        Supplement::Select { input, target, seed, impute, out } => {
            let d = prepare(&input, impute, seed)?;
            fs::create_dir_all(&out).map_err(|source| Error::Write { path: out.clone(), source })?;
            let sels = supplement_select(&d, &target, seed)?;
            for (name, sel) in &sels {
                println!("{name:<9} alpha {:.4}  {}", sel.chosen_point().lambda, sel.selected.join(", "));
                write_text(&out.join(format!("path_{name}.csv")), &csv_text(|b| sel.write_path_csv(b))?)?;
                emit_plot(&path_plot(sel), &out.join(format!("path_{name}.svg")))?;
            }
            let json: std::collections::BTreeMap<_, _> = sels.iter().map(|(n, s)| (n.clone(), s)).collect();
            write_json(&out.join("selection.json"), &json)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: thread pool: {e}");
        }
    }
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
