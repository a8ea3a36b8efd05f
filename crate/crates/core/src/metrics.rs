//! Scalar losses and regression scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantile level, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(Error::InvalidArgument(format!(
                "quantile level must lie in (0, 1), got {tau}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(q: QuantileLevel) -> f64 {
        q.0
    }
}

/// Check function: `tau * u` for `u > 0`, `-(1 - tau) * u` otherwise.
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u > 0.0 {
        tau * u
    } else {
        -(1.0 - tau) * u
    }
}

/// Mean pinball loss of residuals `u = y - yhat`.
///
/// Panics on an empty slice.
pub fn pinball(residuals: &[f64], tau: QuantileLevel) -> f64 {
    assert!(!residuals.is_empty(), "pinball loss of an empty residual vector");
    let t = tau.get();
    residuals.iter().map(|&u| check_loss(u, t)).sum::<f64>() / residuals.len() as f64
}

/// Mean pinball loss of predictions against targets.
pub fn pinball_between(y: &[f64], yhat: &[f64], tau: QuantileLevel) -> f64 {
    assert_eq!(y.len(), yhat.len());
    let r: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| a - b).collect();
    pinball(&r, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub rmse: f64,
    /// `None` when `y` is constant.
    pub r2: Option<f64>,
}

pub fn mse(y: &[f64], yhat: &[f64]) -> f64 {
    assert_eq!(y.len(), yhat.len());
    y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

pub fn regression_metrics(y: &[f64], yhat: &[f64]) -> Result<RegressionMetrics> {
    if y.len() != yhat.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} targets vs {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::InvalidArgument(
            "regression metrics need at least two samples".into(),
        ));
    }
    let n = y.len() as f64;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    let mse = sse / n;
    Ok(RegressionMetrics {
        mse,
        rmse: mse.sqrt(),
        r2: (sst > 0.0).then(|| 1.0 - sse / sst),
    })
}

/// Slack applied when comparing a cumulative weight against a quantile level,
/// so that e.g. ten weights of 0.1 reach 0.9 after nine steps.
pub const CDF_EPS: f64 = 1e-12;

/// Order statistic `y_(k)` with the smallest `k` such that `k / n >= tau`.
///
/// This is the inverse-CDF ("lower") quantile used throughout the crate.
pub fn lower_quantile(values: &[f64], tau: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let k = (n as f64 * (tau - CDF_EPS)).ceil().max(1.0) as usize;
    v[k.min(n) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(t: f64) -> QuantileLevel {
        QuantileLevel::new(t).unwrap()
    }

    #[test]
    fn pinball_examples() {
        assert!((pinball(&[1.0], q(0.9)) - 0.9).abs() < 1e-15);
        assert!((pinball(&[-1.0], q(0.9)) - 0.1).abs() < 1e-15);
        assert!((pinball(&[2.0, -2.0], q(0.5)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_level_bounds() {
        assert!(QuantileLevel::new(0.0).is_err());
        assert!(QuantileLevel::new(1.0).is_err());
        assert!(QuantileLevel::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<QuantileLevel>("1.5").is_err());
        assert_eq!(serde_json::from_str::<QuantileLevel>("0.9").unwrap().get(), 0.9);
    }

    #[test]
    fn regression_metric_examples() {
        let m = regression_metrics(&[0.0, 2.0], &[0.0, 2.0]).unwrap();
        assert_eq!((m.mse, m.rmse, m.r2), (0.0, 0.0, Some(1.0)));
        let m = regression_metrics(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!((m.mse, m.rmse, m.r2), (1.0, 1.0, Some(0.0)));
        let m = regression_metrics(&[0.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(m.mse, 2.0);
        assert!((m.rmse - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.r2, Some(-1.0));
    }

    #[test]
    fn constant_target_has_no_r2() {
        let m = regression_metrics(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.r2, None);
        assert!(regression_metrics(&[1.0], &[1.0]).is_err());
        assert!(regression_metrics(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn lower_quantile_picks_order_statistic() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(lower_quantile(&v, 0.9), 9.0);
        assert_eq!(lower_quantile(&v, 0.91), 10.0);
        assert_eq!(lower_quantile(&v, 0.05), 1.0);
        assert_eq!(lower_quantile(&v, 0.5), 5.0);
    }

    proptest! {
        #[test]
        fn median_pinball_is_half_mae(u in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let mae = u.iter().map(|x| x.abs()).sum::<f64>() / u.len() as f64;
            prop_assert!((pinball(&u, q(0.5)) - 0.5 * mae).abs() <= 1e-9 * (1.0 + mae));
        }

        #[test]
        fn pinball_nonnegative_zero_iff_zero(u in prop::collection::vec(-10f64..10.0, 1..20), t in 0.01f64..0.99) {
            let l = pinball(&u, q(t));
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, u.iter().all(|&x| x == 0.0));
        }

        #[test]
        fn check_loss_is_convex(a in -50f64..50.0, b in -50f64..50.0, w in 0f64..1.0, t in 0.01f64..0.99) {
            let lhs = check_loss(w * a + (1.0 - w) * b, t);
            let rhs = w * check_loss(a, t) + (1.0 - w) * check_loss(b, t);
            prop_assert!(lhs <= rhs + 1e-9);
        }

        #[test]
        fn rmse_squared_is_mse(y in prop::collection::vec(-5f64..5.0, 2..30), shift in -1f64..1.0) {
            let yhat: Vec<f64> = y.iter().map(|v| v * 0.7 + shift).collect();
            let m = regression_metrics(&y, &yhat).unwrap();
            prop_assert!((m.rmse * m.rmse - m.mse).abs() <= 1e-12 * m.mse.max(1e-300));
        }
    }
}
