//! Grid-search a quantile forest by 4-fold CV pinball loss, fit the winner,
//! and round-trip it through the JSON model file.

use qrfx::forest::{tune, HyperGrid, QuantileForest, TuneObjective};
use qrfx::impute::ImputeMethod;
use qrfx::metrics::QuantileLevel;
use qrfx::pipeline::impute_observed;
use qrfx::synth::synthetic_long_jump;

fn main() -> qrfx::Result<()> {
    let d = synthetic_long_jump(7)?;
    let men = d.split_by_group()?.remove("men").expect("men rows");
    let (men, _, _) = impute_observed(&men, ImputeMethod::Mean, 7)?;
    let feats: Vec<String> = ["v_H_S1", "a_knee_TD", "v_V_TO", "Height"].map(String::from).to_vec();
    let (_, x, y) = men.supervised(&feats, "d_resEffe")?;

    let grid = HyperGrid { n_estimators: vec![100], max_depth: vec![Some(2), Some(3), Some(5)], max_features: vec![1, 2, 4] };
    let tau = QuantileLevel::new(0.9)?;
    let t = tune(&x, &y, &feats, &grid, TuneObjective::Pinball { tau }, 4, 7)?;
    for (h, s) in &t.scores {
        println!("trees {:>3} depth {:?} mtry {}  pinball {s:.4}", h.n_estimators, h.max_depth, h.max_features);
    }
    println!("best {:?} ({:.4})", t.best, t.best_score);

    let f = QuantileForest::fit(&x, &y, &feats, t.best, 7)?;
    let path = std::env::temp_dir().join("qrfx-model.json");
    f.save(&path)?;
    let g = QuantileForest::load(&path)?;
    assert_eq!(f.to_json(), g.to_json());
    println!("saved and reloaded {} ({} trees)", path.display(), g.trees().len());
    Ok(())
}
