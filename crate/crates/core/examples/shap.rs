//! Exact Shapley values of the 0.9-quantile forest: global ranking, additivity,
//! and a waterfall for the longest jump.

use qrfx::explain::{shap_global, shap_individual, ForestModel, ShapMode};
use qrfx::forest::{Hyper, PredictionTarget, QuantileForest};
use qrfx::impute::ImputeMethod;
use qrfx::pipeline::{impute_observed, shap_plot, waterfall_plot};
use qrfx::plot::emit_plot;
use qrfx::synth::synthetic_long_jump;

fn main() -> qrfx::Result<()> {
    let d = synthetic_long_jump(7)?;
    let men = d.split_by_group()?.remove("men").expect("men rows");
    let (men, _, _) = impute_observed(&men, ImputeMethod::Mean, 7)?;
    let feats: Vec<String> = ["v_H_S1", "a_knee_TD", "v_V_TO", "Height", "t_flight_S1"].map(String::from).to_vec();
    let (_, x, y) = men.supervised(&feats, "d_resEffe")?;
    let f = QuantileForest::fit(&x, &y, &feats, Hyper::new(100, Some(3), 3), 7)?;
    let model = ForestModel::new(&f, PredictionTarget::quantile(0.9)?);

    let rep = shap_global(&model, &feats, &x, &x, ShapMode::Exact, 7)?;
    println!("base value {:.4}, worst additivity gap {:.1e}", rep.base_value, rep.max_additivity_gap());
    for &j in &rep.ranking {
        println!("  {:<12} mean|phi| {:.4}", feats[j], rep.mean_abs[j]);
    }

    let best = (0..y.len()).fold(0, |b, i| if y[i] > y[b] { i } else { b });
    let w = shap_individual(&model, &feats, &x[best], &x)?;
    println!("longest jump: f(x) = {:.3} = {:.3} + sum of:", w.prediction, w.base);
    for (name, phi) in &w.contributions {
        println!("  {name:<12} {phi:+.4}");
    }

    let out = std::env::temp_dir().join("qrfx-shap");
    std::fs::create_dir_all(&out)?;
    emit_plot(&shap_plot(&rep), &out.join("bar.svg"))?;
    emit_plot(&waterfall_plot(&w), &out.join("waterfall.svg"))?;
    println!("plots in {}", out.display());
    Ok(())
}
