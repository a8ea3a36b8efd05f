//! Write a synthetic cohort and the long-jump schema, then print its summary table.
//!
//! cargo run --example synthetic_data -- [out_dir] [n_men] [n_women] [seed]

use qrfx::dataset::{format_stats_report, Schema};
use qrfx::synth::synthetic_cohort;

fn main() -> qrfx::Result<()> {
    let a: Vec<String> = std::env::args().skip(1).collect();
    let out = std::path::PathBuf::from(a.first().map_or("data", String::as_str));
    let num = |i: usize, d: u64| a.get(i).map_or(d, |s| s.parse().expect("integer argument"));
    let (men, women, seed) = (num(1, 35) as usize, num(2, 33) as usize, num(3, 7));

    std::fs::create_dir_all(&out)?;
    let d = synthetic_cohort(men, women, seed)?;
    let csv = out.join(format!("synthetic_{men}_{women}_{seed}.csv"));
    d.save_csv(&csv)?;
    std::fs::write(out.join("longjump_schema.json"), Schema::long_jump().to_json_pretty())?;

    let stats: Vec<_> = d.split_by_group()?.into_iter().map(|(g, d)| (g, d.summarize())).collect();
    print!("{}", format_stats_report(&stats));
    println!("wrote {}", csv.display());
    Ok(())
}
