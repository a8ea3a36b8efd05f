//! Reference numbers the pipeline is checked against, and the tolerance
//! rules that go with them.

/// One row of the per-sex summary table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatRow {
    pub name: &'static str,
    pub men: (f64, f64, f64),
    pub women: (f64, f64, f64),
}

const fn row(name: &'static str, m: (f64, f64, f64), w: (f64, f64, f64)) -> StatRow {
    StatRow { name, men: m, women: w }
}

/// (mean, SD, missing %) per sex, as published. Men n = 35, women n = 33.
pub const SUMMARY: &[StatRow] = &[
    row("d_resOffi", (8.09, 0.29, 0.0), (6.68, 0.24, 0.0)),
    row("d_resEffe", (8.16, 0.26, 0.0), (6.74, 0.24, 3.0)),
    row("d_loss_TO", (7.3, 6.4, 0.0), (6.5, 5.1, 3.0)),
    row("t_step_S3", (216.0, 16.0, 23.0), (227.0, 19.0, 24.0)),
    row("t_step_S2", (245.0, 18.0, 23.0), (244.0, 18.0, 24.0)),
    row("t_step_S1", (195.0, 10.0, 23.0), (190.0, 16.0, 24.0)),
    row("t_contact_S3", (92.0, 8.0, 23.0), (105.0, 8.0, 24.0)),
    row("t_contact_S2", (113.0, 11.0, 23.0), (112.0, 13.0, 24.0)),
    row("t_contact_S1", (122.0, 8.0, 23.0), (118.0, 14.0, 24.0)),
    row("t_flight_S3", (124.0, 13.0, 23.0), (123.0, 18.0, 24.0)),
    row("t_flight_S2", (132.0, 17.0, 23.0), (132.0, 10.0, 24.0)),
    row("t_flight_S1", (73.0, 9.0, 23.0), (73.0, 12.0, 24.0)),
    row("d_step_S3", (2.30, 0.13, 43.0), (2.08, 0.14, 0.0)),
    row("d_step_S2", (2.44, 0.15, 43.0), (2.29, 0.17, 0.0)),
    row("d_step_S1", (2.19, 0.11, 0.0), (2.04, 0.17, 0.0)),
    row("r_stepDiff_S32", (5.9, 4.8, 43.0), (10.3, 8.4, 0.0)),
    row("r_stepDiff_S21", (-9.3, 6.2, 43.0), (-10.6, 6.9, 0.0)),
    row("v_H_S3", (10.41, 0.21, 43.0), (9.29, 0.27, 0.0)),
    row("v_H_S2", (10.37, 0.28, 43.0), (9.30, 0.27, 0.0)),
    row("v_H_S1", (9.76, 0.41, 0.0), (8.87, 0.39, 0.0)),
    row("v_H_TO", (8.68, 0.45, 0.0), (7.93, 0.42, 0.0)),
    row("v_V_TO", (3.68, 0.29, 0.0), (3.15, 0.31, 0.0)),
    row("t_TDO", (0.12, 0.01, 77.0), (0.12, 0.01, 76.0)),
    row("v_HDiff_TDO", (-1.59, 0.50, 0.0), (-1.45, 0.34, 0.0)),
    row("v_TO", (9.43, 0.37, 0.0), (8.54, 0.38, 0.0)),
    row("a_TO", (23.0, 2.3, 0.0), (21.7, 2.4, 0.0)),
    row("h_CMLower", (3.3, 1.6, 23.0), (3.2, 1.9, 24.0)),
    row("a_body_TD", (-35.5, 2.1, 23.0), (-36.1, 1.8, 24.0)),
    row("a_body_TO", (19.9, 3.9, 0.0), (19.5, 4.8, 0.0)),
    row("a_trunk_TD", (-5.6, 4.4, 57.0), (-7.4, 4.6, 61.0)),
    row("a_trunk_TO", (1.9, 6.5, 0.0), (3.3, 6.1, 0.0)),
    row("a_trunkRot_TDO", (10.1, 2.8, 77.0), (5.6, 4.5, 76.0)),
    row("a_thigh_TO", (-13.7, 9.0, 0.0), (-10.7, 8.9, 0.0)),
    row("w_thigh_TDO", (598.0, 141.0, 0.0), (616.0, 127.0, 0.0)),
    row("a_knee_TD", (169.3, 5.6, 23.0), (167.9, 6.3, 24.0)),
    row("a_kneeMin_TDO", (138.8, 8.8, 0.0), (138.2, 5.8, 0.0)),
    row("a_kneeRange_TDO", (31.0, 9.2, 23.0), (29.0, 6.6, 24.0)),
    row("w_knee_TDO", (-504.0, 143.0, 23.0), (-473.0, 115.0, 24.0)),
    row("a_hip_LD", (94.0, 19.0, 37.0), (88.4, 14.0, 36.0)),
    row("a_knee_LD", (134.7, 12.1, 37.0), (138.1, 14.7, 36.0)),
    row("a_trunk_LD", (28.4, 40.2, 37.0), (31.3, 35.3, 36.0)),
    row("d_loss_LD", (0.06, 0.10, 37.0), (0.05, 0.07, 36.0)),
    row("d_LD", (0.62, 0.13, 37.0), (0.55, 0.08, 36.0)),
    row("Height", (1.85, 0.06, 0.0), (1.73, 0.06, 3.0)),
    row("Weight", (75.0, 7.0, 0.0), (62.0, 6.0, 6.0)),
];

pub const N_MEN: usize = 35;
pub const N_WOMEN: usize = 33;

pub fn summary_row(name: &str) -> Option<&'static StatRow> {
    SUMMARY.iter().find(|r| r.name == name)
}

/// Allowed absolute error on a reported mean or SD: one unit for
/// millisecond columns, 0.01 otherwise.
pub fn stat_tolerance(unit: &str) -> f64 {
    if unit == "ms" { 1.0 } else { 0.01 }
}

/// Allowed error on a missing rate, in percentage points.
pub const MISSING_TOLERANCE: f64 = 1.0;

/// Best-MSE imputation per sex.
pub const IMPUTE_MEN_RF_MSE: f64 = 0.0432;
pub const IMPUTE_WOMEN_KNN_MSE: f64 = 0.0421;
pub const IMPUTE_COMBINED_RF_MSE: f64 = 0.0526;

pub const SELECTED_MEN: &[&str] = &[
    "v_H_S1", "a_knee_TD", "t_contact_S2", "d_loss_LD", "h_CMLower", "v_TO", "a_knee_LD", "Height",
    "t_flight_S1", "Weight", "t_flight_S2", "v_H_S3", "a_trunk_TO", "v_V_TO", "a_kneeRange_TDO",
    "r_stepDiff_S21", "t_flight_S3", "w_thigh_TDO", "v_H_S2",
];
pub const SELECTED_WOMEN: &[&str] = &[
    "v_H_S2", "d_LD", "r_stepDiff_S32", "a_knee_LD", "t_flight_S2", "r_stepDiff_S21", "a_thigh_TO",
    "v_H_S3", "t_flight_S1", "v_H_S1",
];
pub const SELECTED_S_MEN: f64 = 0.84;
pub const SELECTED_S_WOMEN: f64 = 0.04;
pub const SELECTED_COUNT_MEN: (usize, usize) = (15, 23);
pub const SELECTED_COUNT_WOMEN: (usize, usize) = (7, 13);
pub const SELECTION_JACCARD: f64 = 0.6;

/// Squared-loss selections on the combined and per-sex data.
pub const SQUARED_COMBINED: &[&str] = &[
    "Height", "Weight", "t_contact_S2", "t_flight_S2", "v_H_S3", "v_H_S2", "v_H_S1", "v_V_TO", "v_TO",
    "Gender_isFemale",
];
pub const SQUARED_MEN: &[&str] = &[
    "Height", "d_loss_TO", "t_contact_S2", "t_flight_S2", "d_step_S1", "v_H_S3", "v_H_S2", "v_H_S1",
    "v_V_TO", "v_TO", "h_CMLower", "a_knee_LD", "d_loss_LD",
];
pub const SQUARED_WOMEN: &[&str] = &["t_flight_S1", "v_H_S3", "v_H_S2", "v_H_S1", "a_body_TD"];
pub const SQUARED_ALPHA: [f64; 3] = [0.0307, 0.0180, 0.0488];
pub const SQUARED_JACCARD: f64 = 0.7;

/// Tuned (n_estimators, max_depth, max_features) and best CV pinball loss.
pub const TUNED_MEN: (usize, usize, usize) = (100, 3, 6);
pub const TUNED_WOMEN: (usize, usize, usize) = (100, 3, 1);
pub const TUNE_PINBALL_MEN: f64 = 0.0287;
pub const TUNE_PINBALL_WOMEN: f64 = 0.0333;
pub const TUNE_DEPTH_RANGE: (usize, usize) = (2, 4);

pub const SHAP_MEN_TOP1: &str = "v_H_S1";
pub const SHAP_MEN_TOP1_MEAN_ABS: f64 = 0.071;
pub const SHAP_MEN_TOP1_RANGE: (f64, f64) = (0.05, 0.09);
pub const SHAP_WOMEN_TOP3: &[&str] = &["v_H_S1", "v_H_S2", "v_H_S3"];
pub const SHAP_BEST_WOMEN_TOP3_CONTAINS: &[&str] = &["r_stepDiff_S21", "r_stepDiff_S32"];

/// Feature thresholds seen in the men's dependence plots.
pub const KINK_V_H_S1: f64 = 9.6;
pub const STEP_A_KNEE_TD: f64 = 169.0;

/// ICE features and 2-D PDP pairs per sex.
pub const ICE_MEN: &[&str] = &["v_H_S1", "a_knee_TD", "v_V_TO"];
pub const PDP_MEN: &[(&str, &str)] = &[("v_H_S1", "a_knee_TD"), ("v_H_S1", "v_V_TO"), ("a_knee_TD", "v_V_TO")];
pub const ICE_WOMEN: &[&str] = &["v_H_S1", "v_H_S2", "v_H_S3"];
pub const PDP_WOMEN: &[(&str, &str)] = &[
    ("v_H_S1", "a_knee_LD"),
    ("v_H_S2", "r_stepDiff_S21"),
    ("v_H_S3", "r_stepDiff_S32"),
];

/// Combined-vs-split table: (train, test, MSE, RMSE, R2).
pub const COMPARE: &[(&str, &str, f64, f64, f64)] = &[
    ("Combined", "Combined", 0.0450, 0.212, 0.920),
    ("Combined", "Men", 0.0404, 0.199, 0.396),
    ("Combined", "Women", 0.0496, 0.220, 0.036),
    ("Men", "Men", 0.0374, 0.192, 0.441),
    ("Women", "Women", 0.0254, 0.158, 0.503),
];
pub const COMPARE_COMBINED_R2_MIN: f64 = 0.85;

/// Relative tolerance on reported losses and MSEs.
pub const REL_TOLERANCE: f64 = 0.20;

pub fn within_rel(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

pub fn jaccard<A: AsRef<str>, B: AsRef<str>>(a: &[A], b: &[B]) -> f64 {
    use std::collections::BTreeSet;
    let a: BTreeSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: BTreeSet<&str> = b.iter().map(AsRef::as_ref).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnKind, Schema};

    #[test]
    fn summary_covers_every_numeric_schema_column() {
        let s = Schema::long_jump();
        let numeric: Vec<&str> =
            s.columns().iter().filter(|c| c.kind != ColumnKind::Group).map(|c| c.name.as_str()).collect();
        let listed: Vec<&str> = SUMMARY.iter().map(|r| r.name).collect();
        assert_eq!(numeric, listed);
    }

    #[test]
    fn reference_lists_use_schema_names() {
        let s = Schema::long_jump();
        for n in SELECTED_MEN.iter().chain(SELECTED_WOMEN).chain(SQUARED_MEN).chain(SQUARED_WOMEN) {
            assert!(s.get(n).is_some(), "{n}");
        }
        assert_eq!(SELECTED_MEN.len(), 19);
        assert_eq!(SELECTED_WOMEN.len(), 10);
        assert_eq!(SQUARED_COMBINED.len(), 10);
    }

    #[test]
    fn jaccard_basics() {
        assert_eq!(jaccard(&["a", "b"], &["b", "c"]), 1.0 / 3.0);
        assert_eq!(jaccard::<&str, &str>(&[], &[]), 1.0);
        assert!(within_rel(0.024, 0.02, 0.2) && !within_rel(0.0241, 0.02, 0.2));
    }
}
