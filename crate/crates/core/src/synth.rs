//! Synthetic long-jump cohorts shaped like the reference summary table.
//!
//! Every numeric column is affinely rescaled so its observed mean and SD hit
//! the table exactly; missing cells come in shared blocks per missing rate.
//! The men's target carries a kink in v_H_S1 at 9.6 m/s and a step in
//! a_knee_TD at 169 degrees; the women's target is driven by the three
//! approach velocities and the last two step-length changes.

use std::collections::BTreeMap;

use crate::dataset::{ColumnKind, Schema, TabularDataset};
use crate::error::Result;
use crate::rng::SplitMix64;
use crate::targets::{summary_row, KINK_V_H_S1, N_MEN, N_WOMEN, STEP_A_KNEE_TD};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sex {
    Men,
    Women,
}

/// Loading of each column on the latent speed and knee factors.
fn loadings(name: &str) -> (f64, f64) {
    match name {
        "v_H_S3" | "v_H_S2" | "v_H_S1" | "v_H_TO" | "v_TO" => (0.85, 0.0),
        "d_step_S3" | "d_step_S2" | "d_step_S1" | "Height" => (0.4, 0.0),
        "t_contact_S1" | "t_contact_S2" => (-0.3, 0.0),
        "a_knee_TD" => (0.0, 1.0),
        "v_V_TO" => (0.2, 0.6),
        _ => (0.0, 0.0),
    }
}

fn rescale(col: &mut [f64], observed: &[bool], mean: f64, sd: f64) {
    let obs: Vec<f64> = col.iter().zip(observed).filter(|(_, &o)| o).map(|(v, _)| *v).collect();
    let n = obs.len() as f64;
    if n < 2.0 {
        col.iter_mut().for_each(|v| *v = mean);
        return;
    }
    let m = obs.iter().sum::<f64>() / n;
    let s = (obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt();
    let k = if s > 0.0 { sd / s } else { 0.0 };
    col.iter_mut().for_each(|v| *v = mean + (*v - m) * k);
}

fn cohort(sex: Sex, n: usize, rng: &mut SplitMix64) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let schema = Schema::long_jump();
    let names: Vec<String> = schema
        .columns()
        .iter()
        .filter(|c| c.kind != ColumnKind::Group)
        .map(|c| c.name.clone())
        .collect();
    let speed: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let knee: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let stat = |name: &str| {
        let r = summary_row(name).expect("every schema column has a summary row");
        if sex == Sex::Men { r.men } else { r.women }
    };

    // one shared row block per distinct missing rate
    let mut blocks: BTreeMap<u64, Vec<bool>> = BTreeMap::new();
    for name in &names {
        let pct = stat(name).2;
        blocks.entry(pct.to_bits()).or_insert_with(|| {
            let k = ((pct / 100.0) * n as f64).round() as usize;
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            let mut obs = vec![true; n];
            for &i in idx.iter().take(k.min(n.saturating_sub(2))) {
                obs[i] = false;
            }
            obs
        });
    }

    let mut cols: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for name in &names {
        let (ls, lk) = loadings(name);
        let rest = (1.0 - ls * ls - lk * lk).max(0.0).sqrt();
        let mut col: Vec<f64> =
            (0..n).map(|i| ls * speed[i] + lk * knee[i] + rest * rng.normal()).collect();
        let (mean, sd, pct) = stat(name);
        rescale(&mut col, &blocks[&pct.to_bits()], mean, sd);
        cols.insert(name.as_str(), col);
    }

    let z = |name: &str, i: usize| {
        let (m, s, _) = stat(name);
        (cols[name][i] - m) / s
    };
    let mut y: Vec<f64> = (0..n)
        .map(|i| {
            let noise = 0.02 * rng.normal();
            match sex {
                Sex::Men => {
                    let v = cols["v_H_S1"][i] - KINK_V_H_S1;
                    0.5 * v.min(0.0) + 0.08 * v.max(0.0)
                        + if cols["a_knee_TD"][i] > STEP_A_KNEE_TD { 0.15 } else { 0.0 }
                        + 0.03 * z("v_V_TO", i)
                        + noise
                }
                Sex::Women => {
                    0.07 * (z("v_H_S1", i) + z("v_H_S2", i) + z("v_H_S3", i))
                        + 0.03 * (z("r_stepDiff_S32", i) - z("r_stepDiff_S21", i))
                        + noise
                }
            }
        })
        .collect();
    let (m, s, pct) = stat("d_resEffe");
    rescale(&mut y, &blocks[&pct.to_bits()], m, s);
    let loss = cols["d_loss_TO"].clone();
    let mut offi: Vec<f64> = y.iter().zip(&loss).map(|(a, l)| a - l.max(0.0) / 100.0).collect();
    let (m, s, pct) = stat("d_resOffi");
    rescale(&mut offi, &blocks[&pct.to_bits()], m, s);
    cols.insert("d_resEffe", y);
    cols.insert("d_resOffi", offi);

    let cells = (0..n)
        .map(|i| {
            names
                .iter()
                .map(|c| blocks[&stat(c).2.to_bits()][i].then(|| cols[c.as_str()][i]))
                .collect()
        })
        .collect();
    (names, cells)
}

/// `n_men` + `n_women` rows over the full long-jump schema, group labels
/// "men" / "women".
pub fn synthetic_cohort(n_men: usize, n_women: usize, seed: u64) -> Result<TabularDataset> {
    let schema = Schema::long_jump();
    let mut rng = SplitMix64::for_purpose(seed, "synth", &[]);
    let (names, mut cells) = cohort(Sex::Men, n_men, &mut rng);
    let (_, women) = cohort(Sex::Women, n_women, &mut rng);
    cells.extend(women);
    let columns = names.iter().map(|n| schema.get(n).expect("schema column").clone()).collect();
    let labels = (0..n_men + n_women)
        .map(|i| Some(if i < n_men { "men" } else { "women" }.to_string()))
        .collect();
    let group = schema.group_column().expect("schema has a group column").name.clone();
    TabularDataset::from_cells(columns, cells, Some((group, labels)))
}

/// 35 men and 33 women.
pub fn synthetic_long_jump(seed: u64) -> Result<TabularDataset> {
    synthetic_cohort(N_MEN, N_WOMEN, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{stat_tolerance, MISSING_TOLERANCE, SUMMARY};

    #[test]
    fn matches_summary_table() {
        let d = synthetic_long_jump(1).unwrap();
        let groups = d.split_by_group().unwrap();
        for (label, g) in &groups {
            let stats = g.summarize();
            for r in SUMMARY {
                let (m, s, pct) = if label == "men" { r.men } else { r.women };
                let c = stats.columns.iter().find(|c| c.name == r.name).unwrap();
                let tol = stat_tolerance(&c.unit);
                assert!((c.mean.unwrap() - m).abs() < tol, "{label} {} mean", r.name);
                assert!((c.sd.unwrap() - s).abs() < tol, "{label} {} sd", r.name);
                assert!((c.missing_pct - pct).abs() <= MISSING_TOLERANCE, "{label} {} missing", r.name);
            }
        }
    }

    #[test]
    fn seeded_and_deterministic() {
        let a = synthetic_long_jump(3).unwrap();
        let b = synthetic_long_jump(3).unwrap();
        let c = synthetic_long_jump(4).unwrap();
        assert_eq!(a.cells(), b.cells());
        assert_ne!(a.cells(), c.cells());
    }
}
