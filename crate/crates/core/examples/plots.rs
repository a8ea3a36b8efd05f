//! Every plot kind from hand-made data. Each SVG gets a sibling .data.csv,
//! and rendering the same data twice gives the same bytes.

use qrfx::plot::{data_path, emit_plot, PlotData};

fn main() -> qrfx::Result<()> {
    let out = std::env::temp_dir().join("qrfx-plots");
    std::fs::create_dir_all(&out)?;
    let values: Vec<f64> = (0..60).map(|i| 6.0 + (i as f64 * 0.37).sin() + i as f64 * 0.02).collect();
    let grid: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let curves: Vec<Vec<f64>> = (0..5).map(|k| grid.iter().map(|g| (g * 0.3).tanh() + k as f64 * 0.1).collect()).collect();
    let pdp: Vec<f64> = (0..10).map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / 5.0).collect();

    let plots = [
        ("hist", PlotData::Hist { label: "d_resEffe".into(), values, bins: 10, quantiles: vec![0.1, 0.5, 0.9] }),
        ("bar", PlotData::Bar { title: "mean |phi|".into(), labels: vec!["a".into(), "b".into()], values: vec![0.07, 0.02] }),
        ("waterfall", PlotData::Waterfall { base: 7.5, prediction: 7.9, contributions: vec![("a".into(), 0.3), ("b".into(), 0.1)] }),
        ("path", PlotData::Path {
            s: vec![0.0, 0.1, 0.3, 0.6],
            loss: vec![0.05, 0.03, 0.028, 0.031],
            nonzero: vec![0, 2, 5, 9],
            chosen: Some(2),
            loss_label: "CV pinball loss".into(),
        }),
        ("ice", PlotData::Ice { feature: "a".into(), grid: grid.clone(), curves, pdp, markers: vec![(2.0, 0.6), (7.0, 1.0)] }),
        ("pdp2", PlotData::Pdp2 {
            features: ["a".into(), "b".into()],
            grid_a: grid.clone(),
            grid_b: grid.clone(),
            surface: grid.iter().map(|a| grid.iter().map(|b| (a * 0.3).tanh() * b * 0.1).collect()).collect(),
            points: vec![(1.0, 2.0), (5.0, 5.0)],
        }),
    ];
    for (name, data) in &plots {
        let p = out.join(format!("{name}.svg"));
        emit_plot(data, &p)?;
        let first = std::fs::read(&p)?;
        emit_plot(data, &p)?;
        assert_eq!(first, std::fs::read(&p)?);
        println!("{} ({} bytes) + {}", p.display(), first.len(), data_path(&p).display());
    }
    Ok(())
}
