//! Conditional quantiles and mean from one forest; quantiles never cross.

use qrfx::forest::{Hyper, PredictionTarget, QuantileForest, QuantileInterp};
use qrfx::metrics::QuantileLevel;
use qrfx::rng::SplitMix64;

fn main() -> qrfx::Result<()> {
    // heteroscedastic toy: spread grows with x
    let mut g = SplitMix64::new(3);
    let x: Vec<Vec<f64>> = (0..200).map(|_| vec![g.next_f64() * 4.0]).collect();
    let y: Vec<f64> = x.iter().map(|r| r[0] + r[0] * 0.5 * g.normal()).collect();
    let f = QuantileForest::fit(&x, &y, &["x".to_string()], Hyper::new(200, Some(5), 1), 3)?;

    println!("{:>4} {:>8} {:>8} {:>8} {:>8} {:>8}", "x", "q0.1", "q0.5", "q0.9", "q0.9lin", "mean");
    for xv in [0.5, 1.5, 2.5, 3.5] {
        let row = [xv];
        let qs: Vec<f64> = [0.1, 0.5, 0.9]
            .iter()
            .map(|&t| f.predict(&row, PredictionTarget::quantile(t).unwrap()))
            .collect::<qrfx::Result<_>>()?;
        let lin = f.predict(&row, PredictionTarget::Quantile { tau: QuantileLevel::new(0.9)?, interp: QuantileInterp::Linear })?;
        let mean = f.predict_mean(&row)?;
        assert!(qs[0] <= qs[1] && qs[1] <= qs[2]);
        println!("{xv:>4} {:>8.3} {:>8.3} {:>8.3} {lin:>8.3} {mean:>8.3}", qs[0], qs[1], qs[2]);
    }
    Ok(())
}
