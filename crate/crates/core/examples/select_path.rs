//! Pinball-loss Lasso path at tau = 0.9 with repeated 3-fold CV, written as
//! path.csv and a dual-axis path.svg.

use qrfx::dataset::ColumnKind;
use qrfx::impute::ImputeMethod;
use qrfx::l1::{select_features, Loss, SelectConfig};
use qrfx::metrics::QuantileLevel;
use qrfx::pipeline::{impute_observed, path_plot};
use qrfx::plot::emit_plot;
use qrfx::synth::synthetic_long_jump;

fn main() -> qrfx::Result<()> {
    let d = synthetic_long_jump(7)?;
    let women = d.split_by_group()?.remove("women").expect("women rows");
    let (women, _, _) = impute_observed(&women, ImputeMethod::Mean, 7)?;
    let feats = women.names_of_kind(ColumnKind::Feature);

    let mut cfg = SelectConfig::new(Loss::Pinball, QuantileLevel::new(0.9)?, 7);
    cfg.repeats = 3;
    let sel = select_features(&women, &feats, "d_resEffe", &cfg)?;
    let best = sel.chosen_point();
    println!("{} penalties, chosen lambda {:.4} (s = {:.3}, CV pinball {:.4})", sel.path.len(), best.lambda, best.s, best.mean_loss);
    println!("selected: {:?}", sel.selected);

    let out = std::env::temp_dir().join("qrfx-select");
    std::fs::create_dir_all(&out)?;
    sel.write_path_csv(std::fs::File::create(out.join("path.csv"))?)?;
    emit_plot(&path_plot(&sel), &out.join("path.svg"))?;
    println!("wrote {}", out.display());
    Ok(())
}
