//! Squared-loss Lasso on the combined cohort (with a female indicator) and on
//! each sex, 4-fold CV with a single repeat.

use qrfx::impute::ImputeMethod;
use qrfx::pipeline::{impute_observed, supplement_select};
use qrfx::synth::synthetic_long_jump;

fn main() -> qrfx::Result<()> {
    let (d, _, _) = impute_observed(&synthetic_long_jump(7)?, ImputeMethod::Mean, 7)?;
    for (name, sel) in supplement_select(&d, "d_resEffe", 7)? {
        let p = sel.chosen_point();
        println!("{name:<9} alpha {:.4}  CV MSE {:.4}  {} features", p.lambda, p.mean_loss, sel.selected.len());
        println!("          {}", sel.selected.join(", "));
    }
    Ok(())
}
