//! Deterministic fold construction shared by every cross-validated stage.

mod compare;

pub use compare::{compare_combined_vs_split, compare_grid, CompareConfig, CompareReport, CompareRow, FeatureSets, FEMALE_INDICATOR};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

/// Assignment of `n` rows to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

/// Shuffle rows and deal them round-robin into `k` folds.
///
/// With `strata`, each stratum (in sorted label order) is shuffled on its own
/// and dealt continuing from where the previous stratum stopped, so fold sizes
/// differ by at most one both overall and within every stratum.
pub fn make_folds(n: usize, k: usize, seed: u64, strata: Option<&[String]>) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::InvalidArgument("fold count must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} rows into {k} folds"
        )));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    match strata {
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{} stratum labels for {n} rows",
                    labels.len()
                )));
            }
            for (i, l) in labels.iter().enumerate() {
                groups.entry(l.as_str()).or_default().push(i);
            }
        }
        None => {
            groups.insert("", (0..n).collect());
        }
    }
    let mut assignments = vec![0; n];
    let mut next = 0usize;
    for (s, (_, mut rows)) in groups.into_iter().enumerate() {
        let mut rng = SplitMix64::for_purpose(seed, "folds", &[s as u64]);
        rng.shuffle(&mut rows);
        for r in rows {
            assignments[r] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
        stratified: strata.is_some(),
    })
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] != fold).collect()
    }

    /// `(train, test)` row indices for each fold in order.
    pub fn splits(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        (0..self.k)
            .map(|f| (self.train_indices(f), self.test_indices(f)))
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }

    /// Inner plan over the training rows of `fold`, expressed in the outer
    /// row numbering: each inner split is `(train, test)` drawn only from the
    /// outer training set.
    pub fn nested(&self, fold: usize, inner_k: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let outer_train = self.train_indices(fold);
        let inner = make_folds(
            outer_train.len(),
            inner_k,
            derive_seed(self.seed, "nested", &[fold as u64]),
            None,
        )?;
        Ok(inner
            .splits()
            .into_iter()
            .map(|(tr, te)| {
                (
                    tr.into_iter().map(|i| outer_train[i]).collect(),
                    te.into_iter().map(|i| outer_train[i]).collect(),
                )
            })
            .collect())
    }
}
