//! One line per acceptance criterion.
//!
//! Criteria that need the authors' measurements read `$QRFX_DATA_DIR/longjump.csv`
//! and report BLOCKED when it is absent. Everything else runs on synthetic
//! inputs. Exit status is non-zero only when a runnable criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qrfx::cv::{compare_combined_vs_split, make_folds, CompareConfig, FeatureSets};
use qrfx::dataset::{canonical_gender, ColumnKind, Schema, TabularDataset};
use qrfx::explain::{
    ice_1d, pdp_2d, pdp_slopes, shap_exact, shap_global, shap_individual, FnModel, Model, ForestModel, ShapMode,
};
use qrfx::forest::{tune, Hyper, HyperGrid, PredictionTarget, QuantileForest, TuneObjective};
use qrfx::impute::{evaluate_imputers, ImputeEvalConfig, ImputeMethod};
use qrfx::l1::{fit_l1_pinball, fit_l1_squared_with, select_features, L1Options, Loss, SelectConfig};
use qrfx::metrics::{check_loss, QuantileLevel};
use qrfx::pipeline::{choose_shap_mode, impute_observed, quadrant_test, reproduce, supplement_select, PipelineConfig};
use qrfx::rng::SplitMix64;
use qrfx::synth::synthetic_long_jump;
use qrfx::targets as tg;

const SEED: u64 = 7;

enum Status {
    Pass,
    Fail,
    Blocked,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn judge(ok: bool, detail: String) -> Outcome {
    Outcome { status: if ok { Status::Pass } else { Status::Fail }, detail }
}

fn blocked() -> Outcome {
    Outcome {
        status: Status::Blocked,
        detail: "needs the authors' CSV; set QRFX_DATA_DIR to a directory holding longjump.csv".into(),
    }
}

type Res<T> = Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

fn q(tau: f64) -> QuantileLevel {
    QuantileLevel::new(tau).unwrap()
}

/// Smallest sorted value whose rank share reaches tau.
fn sorted_quantile(v: &[f64], tau: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = ((tau * s.len() as f64) - 1e-12).ceil().max(1.0) as usize;
    s[k - 1]
}

// ---------------------------------------------------------------------------
// data-dependent context
// ---------------------------------------------------------------------------

struct RealData {
    raw: TabularDataset,
    men: TabularDataset,
    women: TabularDataset,
}

fn real_data() -> Option<Res<RealData>> {
    let dir = std::env::var_os("QRFX_DATA_DIR")?;
    let path = Path::new(&dir).join("longjump.csv");
    if !path.is_file() {
        return None;
    }
    Some((|| {
        let raw = TabularDataset::load_csv(&path, &Schema::long_jump()).map_err(err)?;
        let mut men = None;
        let mut women = None;
        for (label, d) in raw.split_by_group().map_err(err)? {
            match canonical_gender(&label) {
                Some("men") => men = Some(d),
                Some("women") => women = Some(d),
                _ => {}
            }
        }
        Ok(RealData {
            raw,
            men: men.ok_or("no men rows")?,
            women: women.ok_or("no women rows")?,
        })
    })())
}

/// Imputed with the method the reference reports, restricted to rows with an observed target.
fn imputed(d: &TabularDataset, method: ImputeMethod) -> Res<TabularDataset> {
    let (filled, _, _) = impute_observed(d, method, SEED).map_err(err)?;
    let t = d.column_index("d_resEffe").map_err(err)?;
    let rows: Vec<usize> = (0..d.n_rows()).filter(|&i| !d.is_missing(i, t)).collect();
    filled.select_rows(&rows).map_err(err)
}

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn c1(r: &RealData) -> Res<Outcome> {
    let t0 = Instant::now();
    let men = r.men.summarize();
    let women = r.women.summarize();
    let secs = t0.elapsed().as_secs_f64();
    let mut misses = Vec::new();
    for row in tg::SUMMARY {
        for (stats, (m, s, pct), g) in [(&men, row.men, "men"), (&women, row.women, "women")] {
            let c = stats.get(row.name).ok_or(format!("no column {}", row.name))?;
            let tol = tg::stat_tolerance(&c.unit);
            let ok = c.mean.is_some_and(|v| (v - m).abs() <= tol)
                && c.sd.is_some_and(|v| (v - s).abs() <= tol)
                && (c.missing_pct - pct).abs() <= tg::MISSING_TOLERANCE;
            if !ok {
                misses.push(format!("{g}/{}", row.name));
            }
        }
    }
    Ok(judge(
        misses.is_empty() && secs < 1.0,
        format!("{} mismatches {:?}, {secs:.3}s", misses.len(), &misses[..misses.len().min(5)]),
    ))
}

fn c2(r: &RealData) -> Res<Outcome> {
    let t0 = Instant::now();
    let mut wins: BTreeMap<&str, usize> = BTreeMap::new();
    let mut mse: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let cases = [
        ("men", &r.men, ImputeMethod::ForestIterative),
        ("women", &r.women, ImputeMethod::Knn),
        ("combined", &r.raw, ImputeMethod::ForestIterative),
    ];
    for seed in 1..=5u64 {
        for (name, d, want) in &cases {
            let rep = evaluate_imputers(d, "d_resEffe", &ImputeEvalConfig::new(seed)).map_err(err)?;
            *wins.entry(name).or_default() += usize::from(rep.best_mse == *want);
            mse.entry(name).or_default().push(rep.score(*want).mse);
        }
    }
    let mean = |k: &str| mse[k].iter().sum::<f64>() / mse[k].len() as f64;
    let secs = t0.elapsed().as_secs_f64();
    let ok = wins["men"] >= 3
        && wins["women"] >= 3
        && wins["combined"] >= 3
        && tg::within_rel(mean("men"), tg::IMPUTE_MEN_RF_MSE, tg::REL_TOLERANCE)
        && tg::within_rel(mean("women"), tg::IMPUTE_WOMEN_KNN_MSE, tg::REL_TOLERANCE)
        && tg::within_rel(mean("combined"), tg::IMPUTE_COMBINED_RF_MSE, tg::REL_TOLERANCE)
        && secs < 300.0;
    Ok(judge(
        ok,
        format!(
            "wins men RF {}/5 women KNN {}/5 combined RF {}/5; MSE {:.4} {:.4} {:.4}; {secs:.0}s",
            wins["men"], wins["women"], wins["combined"], mean("men"), mean("women"), mean("combined")
        ),
    ))
}

fn c3(r: &RealData) -> Res<Outcome> {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, d, method, count, reference) in [
        ("men", &r.men, ImputeMethod::ForestIterative, tg::SELECTED_COUNT_MEN, tg::SELECTED_MEN),
        ("women", &r.women, ImputeMethod::Knn, tg::SELECTED_COUNT_WOMEN, tg::SELECTED_WOMEN),
    ] {
        let d = imputed(d, method)?;
        let feats = d.names_of_kind(ColumnKind::Feature);
        let sel = select_features(&d, &feats, "d_resEffe", &SelectConfig::new(Loss::Pinball, q(0.9), SEED))
            .map_err(err)?;
        let n = sel.selected.len();
        let j = tg::jaccard(&sel.selected, reference);
        let first = sel.path.iter().min_by(|a, b| a.s.total_cmp(&b.s)).ok_or("empty path")?;
        let shape = first.mean_loss > sel.chosen_point().mean_loss;
        ok &= (count.0..=count.1).contains(&n) && j >= tg::SELECTION_JACCARD && shape;
        parts.push(format!("{name} {n} features, Jaccard {j:.2}, curve {}", if shape { "ok" } else { "flat" }));
    }
    let combined = imputed(&r.raw, ImputeMethod::ForestIterative)?;
    let sels = supplement_select(&combined, "d_resEffe", SEED).map_err(err)?;
    let comb = &sels.iter().find(|(n, _)| n == "combined").ok_or("no combined selection")?.1;
    let j = tg::jaccard(&comb.selected, tg::SQUARED_COMBINED);
    ok &= j >= tg::SQUARED_JACCARD;
    parts.push(format!("squared combined Jaccard {j:.2}"));
    Ok(judge(ok, parts.join("; ")))
}

fn fit_reference(d: &TabularDataset, feats: &[&str], h: (usize, usize, usize)) -> Res<(QuantileForest, Vec<Vec<f64>>, Vec<f64>)> {
    let feats = owned(feats);
    let (_, x, y) = d.supervised(&feats, "d_resEffe").map_err(err)?;
    let f = QuantileForest::fit(&x, &y, &feats, Hyper::new(h.0, Some(h.1), h.2), SEED).map_err(err)?;
    Ok((f, x, y))
}

fn c4(r: &RealData) -> Res<Outcome> {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, d, method, feats, target) in [
        ("men", &r.men, ImputeMethod::ForestIterative, tg::SELECTED_MEN, tg::TUNE_PINBALL_MEN),
        ("women", &r.women, ImputeMethod::Knn, tg::SELECTED_WOMEN, tg::TUNE_PINBALL_WOMEN),
    ] {
        let d = imputed(d, method)?;
        let feats = owned(feats);
        let (_, x, y) = d.supervised(&feats, "d_resEffe").map_err(err)?;
        let t = tune(&x, &y, &feats, &HyperGrid::default_for(feats.len()), TuneObjective::Pinball { tau: q(0.9) }, 4, SEED)
            .map_err(err)?;
        let depth_ok = t.best.max_depth.is_some_and(|v| (tg::TUNE_DEPTH_RANGE.0..=tg::TUNE_DEPTH_RANGE.1).contains(&v));
        ok &= depth_ok && tg::within_rel(t.best_score, target, tg::REL_TOLERANCE);
        parts.push(format!("{name} pinball {:.4} (target {target}), depth {:?}", t.best_score, t.best.max_depth));
    }
    Ok(judge(ok, parts.join("; ")))
}

fn c6_c7(r: &RealData) -> Res<(Outcome, Outcome)> {
    let tau = PredictionTarget::quantile(0.9).map_err(err)?;
    let men = imputed(&r.men, ImputeMethod::ForestIterative)?;
    let (fm, xm, ym) = fit_reference(&men, tg::SELECTED_MEN, tg::TUNED_MEN)?;
    let mm = ForestModel::new(&fm, tau);
    let mode = choose_shap_mode("auto", &mm, &xm, 1e9);
    let gm = shap_global(&mm, fm.feature_names(), &xm, &xm, mode, SEED).map_err(err)?;
    let top1 = gm.ranking[0];
    let best = (0..ym.len()).fold(0, |b, i| if ym[i] > ym[b] { i } else { b });
    let wm = shap_individual(&mm, fm.feature_names(), &xm[best], &xm).map_err(err)?;

    let women = imputed(&r.women, ImputeMethod::Knn)?;
    let (fw, xw, yw) = fit_reference(&women, tg::SELECTED_WOMEN, tg::TUNED_WOMEN)?;
    let mw = ForestModel::new(&fw, tau);
    let gw = shap_global(&mw, fw.feature_names(), &xw, &xw, choose_shap_mode("auto", &mw, &xw, 1e9), SEED).map_err(err)?;
    let mut top3: Vec<&str> = gw.top(3);
    top3.sort_unstable();
    let mut want = tg::SHAP_WOMEN_TOP3.to_vec();
    want.sort_unstable();
    let bw = (0..yw.len()).fold(0, |b, i| if yw[i] > yw[b] { i } else { b });
    let ww = shap_individual(&mw, fw.feature_names(), &xw[bw], &xw).map_err(err)?;
    let wtop: Vec<&str> = ww.contributions.iter().take(3).map(|c| c.0.as_str()).collect();

    let (lo, hi) = tg::SHAP_MEN_TOP1_RANGE;
    let ok6 = gm.feature_names[top1] == tg::SHAP_MEN_TOP1
        && (lo..=hi).contains(&gm.mean_abs[top1])
        && wm.contributions.first().is_some_and(|c| c.0 == tg::SHAP_MEN_TOP1)
        && top3 == want
        && tg::SHAP_BEST_WOMEN_TOP3_CONTAINS.iter().all(|f| wtop.contains(f));
    let o6 = judge(
        ok6,
        format!(
            "men top-1 {} ({:.3}), best men {}, women top-3 {:?}, best women {:?}",
            gm.feature_names[top1],
            gm.mean_abs[top1],
            wm.contributions.first().map_or("-", |c| c.0.as_str()),
            top3,
            wtop
        ),
    );

    let idx = |n: &str| fm.feature_names().iter().position(|f| f == n).ok_or(format!("no {n}"));
    let ice = ice_1d(&mm, fm.feature_names(), &xm, idx("v_H_S1")?, 20).map_err(err)?;
    let (below, above) = pdp_slopes(&ice.grid, &ice.pdp, tg::KINK_V_H_S1);
    let slope_ok = matches!((below, above), (Some(b), Some(a)) if b > a);
    let surf = pdp_2d(&mm, fm.feature_names(), &xm, idx("v_H_S1")?, idx("a_knee_TD")?, 15).map_err(err)?;
    let (quad_ok, quad) = quadrant_test(&surf, tg::KINK_V_H_S1, tg::STEP_A_KNEE_TD);
    let o7 = judge(slope_ok && quad_ok, format!("slopes {below:.4?} / {above:.4?}; quadrants {quad}"));
    Ok((o6, o7))
}

fn c10(r: &RealData) -> Res<Outcome> {
    let t0 = Instant::now();
    let d = imputed(&r.raw, ImputeMethod::ForestIterative)?;
    let sets = FeatureSets {
        combined: owned(tg::SQUARED_COMBINED),
        men: owned(tg::SQUARED_MEN),
        women: owned(tg::SQUARED_WOMEN),
    };
    let rep = compare_combined_vs_split(&d, "d_resEffe", &sets, &CompareConfig::new(SEED)).map_err(err)?;
    let row = |a: &str, b: &str| rep.row(a, b).ok_or(format!("missing row {a}/{b}"));
    let mm = row("Men", "Men")?.mse;
    let cm = row("Combined", "Men")?.mse;
    let ww = row("Women", "Women")?.mse;
    let cw = row("Combined", "Women")?.mse;
    let r2 = row("Combined", "Combined")?.r2.unwrap_or(f64::NAN);
    let secs = t0.elapsed().as_secs_f64();
    Ok(judge(
        mm < cm && ww < cw && r2 >= tg::COMPARE_COMBINED_R2_MIN && secs < 300.0,
        format!("men {mm:.4} vs {cm:.4}, women {ww:.4} vs {cw:.4}, combined R2 {r2:.3}, {secs:.0}s"),
    ))
}

// ---------------------------------------------------------------------------
// runnable without the reference data
// ---------------------------------------------------------------------------

fn brute_force_shap<M: Model>(m: &M, x: &[f64], bg: &[Vec<f64>]) -> Vec<f64> {
    let p = m.n_features();
    let v = |s: usize| {
        bg.iter()
            .map(|b| {
                let z: Vec<f64> = (0..p).map(|j| if s >> j & 1 == 1 { x[j] } else { b[j] }).collect();
                m.predict(&z)
            })
            .sum::<f64>()
            / bg.len() as f64
    };
    // average marginal contribution over all p! orders
    let mut orders: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..p {
        orders = orders
            .into_iter()
            .flat_map(|o| {
                (0..p).filter(|j| !o.contains(j)).map(|j| [o.as_slice(), &[j]].concat()).collect::<Vec<_>>()
            })
            .collect();
    }
    let mut phi = vec![0.0; p];
    for o in &orders {
        let mut s = 0usize;
        for &j in o {
            phi[j] += v(s | 1 << j) - v(s);
            s |= 1 << j;
        }
    }
    phi.iter().map(|v| v / orders.len() as f64).collect()
}

fn synthetic_men() -> Res<TabularDataset> {
    let d = synthetic_long_jump(SEED).map_err(err)?;
    let men = d.split_by_group().map_err(err)?.remove("men").ok_or("no men")?;
    imputed(&men, ImputeMethod::Mean)
}

fn c5() -> Res<Outcome> {
    let tau = PredictionTarget::quantile(0.9).map_err(err)?;
    // additivity on every training row
    let men = synthetic_men()?;
    let feats = owned(&["v_H_S1", "a_knee_TD", "v_V_TO", "Height", "Weight", "t_flight_S1"]);
    let (_, x, y) = men.supervised(&feats, "d_resEffe").map_err(err)?;
    let f = QuantileForest::fit(&x, &y, &feats, Hyper::new(100, Some(3), 3), SEED).map_err(err)?;
    let m = ForestModel::new(&f, tau);
    let rep = shap_global(&m, &feats, &x, &x, ShapMode::Exact, SEED).map_err(err)?;
    let gap = rep.max_additivity_gap();

    // p = 3 brute force over all orders
    let mut g = SplitMix64::new(SEED);
    let x3: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| g.next_f64()).collect()).collect();
    let y3: Vec<f64> = x3.iter().map(|r| 2.0 * r[0] + f64::from(u8::from(r[1] > 0.5)) + 0.2 * g.normal()).collect();
    let f3 = QuantileForest::fit(&x3, &y3, &names(3), Hyper::new(50, Some(3), 2), SEED).map_err(err)?;
    let mut oracle_gap: f64 = 0.0;
    for target in [tau, PredictionTarget::Mean] {
        let m3 = ForestModel::new(&f3, target);
        for row in &x3 {
            let s = shap_exact(&m3, row, &x3).map_err(err)?;
            let b = brute_force_shap(&m3, row, &x3);
            oracle_gap = s.phi.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(oracle_gap, f64::max);
        }
    }

    // null features: ignored by a closure, and constant for a forest
    let fm = FnModel { p: 3, f: |z: &[f64]| z[0] * z[2] + z[2] };
    let null_fn = x3.iter().map(|r| shap_exact(&fm, r, &x3).map(|s| s.phi[1].abs())).collect::<Result<Vec<_>, _>>().map_err(err)?;
    let xc: Vec<Vec<f64>> = x3.iter().map(|r| vec![r[0], 0.5, r[2]]).collect();
    let fc = QuantileForest::fit(&xc, &y3, &names(3), Hyper::new(50, Some(3), 3), SEED).map_err(err)?;
    let mc = ForestModel::new(&fc, tau);
    let mut null_max = null_fn.into_iter().fold(0.0, f64::max);
    for r in &x3 {
        let row = vec![r[0], r[1], r[2]];
        null_max = null_max.max(shap_exact(&mc, &row, &xc).map_err(err)?.phi[1].abs());
    }
    Ok(judge(
        gap <= 1e-9 && oracle_gap <= 1e-9 && null_max == 0.0,
        format!("additivity gap {gap:.1e} over {} rows; p=3 brute-force gap {oracle_gap:.1e}; null phi {null_max}", x.len()),
    ))
}

fn c7_synthetic() -> Res<Outcome> {
    let men = synthetic_men()?;
    let feats = owned(tg::ICE_MEN);
    let (_, x, y) = men.supervised(&feats, "d_resEffe").map_err(err)?;
    let f = QuantileForest::fit(&x, &y, &feats, Hyper::new(100, Some(3), 2), SEED).map_err(err)?;
    let mut gap: f64 = 0.0;
    for target in [PredictionTarget::quantile(0.9).map_err(err)?, PredictionTarget::Mean] {
        let m = ForestModel::new(&f, target);
        for j in 0..feats.len() {
            let g = ice_1d(&m, &feats, &x, j, 20).map_err(err)?;
            for k in 0..g.grid.len() {
                let mean = g.curves.iter().map(|c| c[k]).sum::<f64>() / g.curves.len() as f64;
                gap = gap.max((mean - g.pdp[k]).abs());
            }
        }
    }
    Ok(judge(gap <= 1e-12, format!("max |pdp - mean(ICE)| {gap:.1e}")))
}

fn fixture_config(out: &Path) -> PipelineConfig {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut c = PipelineConfig::from_json_file(root.join("data/fixture_config.json")).expect("fixture config");
    c.input = Some(root.join("data/fixture.csv"));
    c.out = out.to_path_buf();
    c
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn manifest_core(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    let o = v.as_object_mut().unwrap();
    o.remove("elapsed_seconds");
    o.get_mut("config").unwrap().as_object_mut().unwrap().remove("out");
    v
}

fn c8() -> Res<Outcome> {
    let tmp = tempfile::tempdir().map_err(err)?;
    let run = |name: &str, threads: usize| -> Res<BTreeMap<PathBuf, Vec<u8>>> {
        let dir = tmp.path().join(name);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(err)?;
        pool.install(|| reproduce(&fixture_config(&dir))).map_err(err)?;
        Ok(files(&dir))
    };
    let a = run("a", 8)?;
    let b = run("b", 8)?;
    let c = run("c", 1)?;
    let mut differing = Vec::new();
    for (p, bytes) in &a {
        let same = if p == Path::new("manifest.json") {
            b.get(p).is_some_and(|o| manifest_core(o) == manifest_core(bytes))
        } else {
            b.get(p) == Some(bytes)
        };
        if !same {
            differing.push(p.display().to_string());
        }
    }
    let models: Vec<&PathBuf> = a.keys().filter(|p| p.ends_with("model.json")).collect();
    let models_same = !models.is_empty() && models.iter().all(|p| c.get(*p) == a.get(*p));
    Ok(judge(
        differing.is_empty() && a.len() == b.len() && models_same,
        format!(
            "{} artifacts, {} differ {:?}; {} model files identical at 1 vs 8 threads: {models_same}",
            a.len(),
            differing.len(),
            differing,
            models.len()
        ),
    ))
}

fn lasso_grid_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (f64, f64) {
    let n = y.len() as f64;
    let obj = |b1: f64, b2: f64| {
        let r: Vec<f64> = x.iter().zip(y).map(|(z, yi)| yi - b1 * z[0] - b2 * z[1]).collect();
        let m = r.iter().sum::<f64>() / n;
        r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (2.0 * n) + lambda * (b1.abs() + b2.abs())
    };
    let (mut c1, mut c2, mut step) = (0.0, 0.0, 0.5);
    for _ in 0..8 {
        let mut best = (f64::INFINITY, c1, c2);
        for a in -20..=20 {
            for b in -20..=20 {
                let (b1, b2) = (c1 + a as f64 * step, c2 + b as f64 * step);
                let v = obj(b1, b2);
                if v < best.0 {
                    best = (v, b1, b2);
                }
            }
        }
        (c1, c2, step) = (best.1, best.2, step / 10.0);
    }
    (c1, c2)
}

fn c9() -> Res<Outcome> {
    let mut g = SplitMix64::new(SEED);
    let mut notes = Vec::new();
    let mut ok = true;

    // intercept-only pinball
    let mut worst: f64 = 0.0;
    let mut suboptimal = 0;
    for k in 0..100 {
        let n = 5 + k % 40;
        let y: Vec<f64> = (0..n).map(|_| g.normal() * 3.0).collect();
        let x = vec![vec![0.0]; n];
        for tau in [0.1, 0.5, 0.9] {
            let m = fit_l1_pinball(&x, &y, q(tau), 1e6, SEED).map_err(err)?;
            worst = worst.max((m.beta0 - sorted_quantile(&y, tau)).abs());
            let loss = |c: f64| y.iter().map(|v| check_loss(v - c, tau)).sum::<f64>();
            if y.iter().any(|&c| loss(c) < loss(m.beta0) - 1e-12) {
                suboptimal += 1;
            }
        }
    }
    ok &= worst == 0.0 && suboptimal == 0;
    notes.push(format!("intercept gap {worst:.1e}, {suboptimal} suboptimal"));

    // B = 1, depth 0
    let mut qrf_miss = 0;
    for seed in 0..50u64 {
        let n = 10 + (seed as usize % 20);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![g.next_f64(), g.next_f64()]).collect();
        let y: Vec<f64> = (0..n).map(|_| g.normal()).collect();
        let f = QuantileForest::fit(&x, &y, &names(2), Hyper::new(1, Some(0), 1), seed).map_err(err)?;
        let (_, boot) = f.trees()[0].leaf(&x[0]);
        if boot.len() != n {
            qrf_miss += 1;
        }
        for tau in [0.1, 0.5, 0.9] {
            let got = f.predict_quantile(&x[n - 1], q(tau)).map_err(err)?;
            if got != sorted_quantile(boot, tau) {
                qrf_miss += 1;
            }
        }
    }
    ok &= qrf_miss == 0;
    notes.push(format!("depth-0 QRF mismatches {qrf_miss}"));

    // Lasso vs grid search
    let x: Vec<Vec<f64>> = (0..30).map(|_| vec![g.normal(), g.normal()]).collect();
    let y: Vec<f64> = x.iter().map(|r| 1.5 * r[0] - 0.7 * r[1] + 0.3 * g.normal()).collect();
    let raw = L1Options { standardize: false, ..L1Options::default() };
    let mut lasso_gap: f64 = 0.0;
    for lambda in [0.0, 0.05, 0.2, 0.8] {
        let m = fit_l1_squared_with(&x, &y, lambda, 0, &raw, None).map_err(err)?;
        let (b1, b2) = lasso_grid_oracle(&x, &y, lambda);
        lasso_gap = lasso_gap.max((m.beta[0] - b1).abs()).max((m.beta[1] - b2).abs());
    }
    ok &= lasso_gap <= 1e-3;
    notes.push(format!("Lasso gap {lasso_gap:.1e}"));

    // fold algebra
    let mut bad = 0;
    for t in 0..1000u64 {
        let n = 2 + g.below(80);
        let k = 2 + g.below(n.min(10) - 1);
        let strata: Option<Vec<String>> =
            (t % 2 == 0).then(|| (0..n).map(|_| ["men", "women", "x"][g.below(3)].to_string()).collect());
        let plan = make_folds(n, k, t, strata.as_deref()).map_err(err)?;
        let mut seen = vec![0usize; n];
        for (f, (train, test)) in plan.splits().into_iter().enumerate() {
            test.iter().for_each(|&i| seen[i] += 1);
            if train.len() + test.len() != n || train.iter().any(|i| test.contains(i)) {
                bad += 1;
            }
            if let Some(s) = &strata {
                for label in ["men", "women", "x"] {
                    let total = s.iter().filter(|l| *l == label).count();
                    let here = test.iter().filter(|&&i| s[i] == label).count();
                    if here + 1 < total / k || here > total.div_ceil(k) + 1 {
                        bad += 1;
                    }
                }
            }
            if train.len() >= 2 {
                for (itr, ite) in plan.nested(f, 2).map_err(err)? {
                    if itr.iter().chain(&ite).any(|i| test.contains(i)) || itr.len() + ite.len() != train.len() {
                        bad += 1;
                    }
                }
            }
        }
        if seen.iter().any(|&c| c != 1) {
            bad += 1;
        }
        let sizes = plan.fold_sizes();
        if sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 1 {
            bad += 1;
        }
    }
    ok &= bad == 0;
    notes.push(format!("fold-plan violations {bad}/1000 plans"));
    Ok(judge(ok, notes.join("; ")))
}

fn report(n: usize, title: &str, o: Res<Outcome>) -> bool {
    let o = o.unwrap_or_else(|e| Outcome { status: Status::Fail, detail: format!("error: {e}") });
    let tag = match o.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Blocked => "BLOCKED",
    };
    println!("criterion {n:>2} {tag:<7} {title}: {}", o.detail);
    !matches!(o.status, Status::Fail)
}

fn main() {
    // `cargo test -- --list` and filters from other targets pass through here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let data = real_data();
    let mut ok = true;
    match &data {
        Some(Err(e)) => {
            println!("reference data present but unreadable: {e}");
            ok = false;
        }
        Some(Ok(_)) | None => {}
    }
    let real = data.as_ref().and_then(|d| d.as_ref().ok());
    let with = |f: &dyn Fn(&RealData) -> Res<Outcome>| real.map_or(Ok(blocked()), f);

    ok &= report(1, "summary-table parity", with(&c1));
    ok &= report(2, "imputer ranking", with(&c2));
    ok &= report(3, "feature selection", with(&c3));
    ok &= report(4, "forest tuning", with(&c4));
    ok &= report(5, "SHAP exactness", c5());
    let (o6, o7) = match real {
        Some(r) => match c6_c7(r) {
            Ok((a, b)) => (Ok(a), Ok(b)),
            Err(e) => (Err(e.clone()), Err(e)),
        },
        None => (Ok(blocked()), Ok(blocked())),
    };
    ok &= report(6, "SHAP rankings", o6);
    ok &= report(7, "PDP/ICE identity (hard)", c7_synthetic());
    ok &= report(7, "PDP/ICE kink and quadrant", o7);
    ok &= report(8, "determinism", c8());
    ok &= report(9, "oracle suite", c9());
    ok &= report(10, "combined vs split direction", with(&c10));
    if !ok {
        std::process::exit(1);
    }
}
