//! Full per-group pipeline on a synthetic cohort shaped like the real data.
//!
//! cargo run --release --example reproduce_synthetic -- [out_dir] [seed]

use std::time::Instant;

use qrfx::pipeline::{reproduce, PipelineConfig};
use qrfx::synth::synthetic_long_jump;

fn main() -> qrfx::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "run-synthetic".into());
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed must be an integer"));

    std::fs::create_dir_all(&out)?;
    let csv = std::path::Path::new(&out).join("synthetic.csv");
    synthetic_long_jump(seed)?.save_csv(&csv)?;

    let cfg = PipelineConfig { input: Some(csv), seed: Some(seed), out: out.clone().into(), ..Default::default() };
    let t0 = Instant::now();
    let m = reproduce(&cfg)?;
    for g in &m.groups {
        println!(
            "{:<6} imputer {:<3} selected {:>2} s {:.3} tuned {}/{:?}/{} cv {:.4} shap {:?} top {:?}",
            g.group, g.imputer, g.selected.len(), g.s, g.tuned.n_estimators, g.tuned.max_depth,
            g.tuned.max_features, g.cv_pinball, g.shap_mode, &g.shap_top[..3.min(g.shap_top.len())]
        );
    }
    print!("{}", m.acceptance_table());
    for (k, v) in &m.elapsed_seconds {
        println!("{k:<28} {v:>8.2}s");
    }
    println!("total {:.1}s, artifacts in {out}", t0.elapsed().as_secs_f64());
    Ok(())
}
