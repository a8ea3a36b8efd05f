//! ICE curves with their PDP, slopes either side of a threshold, and a
//! two-feature PDP surface with a quadrant comparison.

use qrfx::explain::{ice_1d, pdp_2d, pdp_slopes, ForestModel};
use qrfx::forest::{Hyper, PredictionTarget, QuantileForest};
use qrfx::pipeline::{ice_plot, pdp2_plot, quadrant_test};
use qrfx::plot::emit_plot;
use qrfx::rng::SplitMix64;

fn main() -> qrfx::Result<()> {
    // kink in a at 0, step in b at 0
    let mut g = SplitMix64::new(11);
    let x: Vec<Vec<f64>> = (0..300).map(|_| vec![g.normal(), g.normal(), g.normal()]).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| 1.0 * r[0].min(0.0) + 0.1 * r[0].max(0.0) + if r[1] > 0.0 { 0.5 } else { 0.0 } + 0.1 * g.normal())
        .collect();
    let names: Vec<String> = ["a", "b", "noise"].map(String::from).to_vec();
    let f = QuantileForest::fit(&x, &y, &names, Hyper::new(150, Some(4), 2), 11)?;
    let m = ForestModel::new(&f, PredictionTarget::quantile(0.9)?);

    let ice = ice_1d(&m, &names, &x, 0, 20)?;
    let (below, above) = pdp_slopes(&ice.grid, &ice.pdp, 0.0);
    println!("PDP slope of a: below 0 {below:.3?}, above 0 {above:.3?}");
    let gap = (0..ice.grid.len())
        .map(|k| (ice.curves.iter().map(|c| c[k]).sum::<f64>() / ice.curves.len() as f64 - ice.pdp[k]).abs())
        .fold(0.0, f64::max);
    println!("max |pdp - mean(ICE)| = {gap:.1e}");

    let s = pdp_2d(&m, &names, &x, 0, 1, 12)?;
    let (pass, detail) = quadrant_test(&s, 0.0, 0.0);
    println!("quadrant test at (0, 0): {pass} ({detail})");

    let out = std::env::temp_dir().join("qrfx-ice");
    std::fs::create_dir_all(&out)?;
    emit_plot(&ice_plot(&ice), &out.join("ice_a.svg"))?;
    emit_plot(&pdp2_plot(&s), &out.join("pdp2_a_b.svg"))?;
    println!("plots in {}", out.display());
    Ok(())
}
