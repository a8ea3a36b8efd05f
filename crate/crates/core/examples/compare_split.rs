//! Combined model (with a female indicator) against separate men's and
//! women's mean forests under one stratified outer CV.

use qrfx::cv::{compare_combined_vs_split, CompareConfig, FeatureSets, FEMALE_INDICATOR};
use qrfx::forest::HyperGrid;
use qrfx::impute::ImputeMethod;
use qrfx::pipeline::impute_observed;
use qrfx::synth::synthetic_long_jump;

fn main() -> qrfx::Result<()> {
    let (d, _, _) = impute_observed(&synthetic_long_jump(7)?, ImputeMethod::Mean, 7)?;
    let speed: Vec<String> = ["v_H_S1", "v_H_S2", "v_H_S3", "a_knee_TD"].map(String::from).to_vec();
    let mut combined = speed.clone();
    combined.push(FEMALE_INDICATOR.into());
    let sets = FeatureSets { combined, men: speed.clone(), women: speed };

    // a one-point grid keeps the example fast; `CompareConfig::new` tunes over 24 candidates
    let cfg = CompareConfig {
        grid: Some(HyperGrid { n_estimators: vec![100], max_depth: vec![Some(3)], max_features: vec![2] }),
        ..CompareConfig::new(7)
    };
    let rep = compare_combined_vs_split(&d, "d_resEffe", &sets, &cfg)?;
    print!("{}", rep.to_text());
    Ok(())
}
