//! Per-group summary table (mean, SD, missing rate) and its CSV form.
//!
//! cargo run --example summary_stats -- [csv]

use qrfx::dataset::{format_stats_report, write_stats_csv, Schema, TabularDataset};
use qrfx::synth::synthetic_long_jump;

fn main() -> qrfx::Result<()> {
    let d = match std::env::args().nth(1) {
        Some(p) => TabularDataset::load_csv(p, &Schema::long_jump())?,
        None => synthetic_long_jump(7)?,
    };
    let stats: Vec<_> = d.split_by_group()?.into_iter().map(|(g, d)| (g, d.summarize())).collect();
    print!("{}", format_stats_report(&stats));

    let mut csv = Vec::new();
    write_stats_csv(&stats, &mut csv)?;
    println!("\nfirst CSV lines:");
    for line in String::from_utf8_lossy(&csv).lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}
