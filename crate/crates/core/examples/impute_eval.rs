//! Compare mean, KNN, Bayesian-ridge and forest imputation by the downstream
//! forest's held-out error, then fill the data with the winner.

use qrfx::impute::{evaluate_imputers, fit_transform, ImputeEvalConfig, ImputeOptions};
use qrfx::synth::synthetic_long_jump;

fn main() -> qrfx::Result<()> {
    let d = synthetic_long_jump(7)?;
    let men = d.split_by_group()?.remove("men").expect("men rows");
    println!("{} missing cells in {} rows", men.missing_count(), men.n_rows());

    // small folds keep the example quick
    let cfg = ImputeEvalConfig { outer_k: 3, inner_k: 2, ..ImputeEvalConfig::new(7) };
    let rep = evaluate_imputers(&men, "d_resEffe", &cfg)?;
    print!("{}", rep.to_text());

    let (imp, filled) = fit_transform(&men, rep.best_mse, &ImputeOptions { seed: 7, ..Default::default() })?;
    println!("filled with {}; complete: {}", imp.method, filled.is_complete());
    for w in &imp.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
