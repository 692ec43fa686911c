//! Stratified k-fold cross-validation and label-permutation significance.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::accuracy;
use crate::rng;
use crate::scalar::Scalar;

/// Splits `0..labels.len()` into `k` disjoint folds that preserve class
/// proportions: each fold holds `⌊n_c/k⌋` or `⌈n_c/k⌉` members of class `c`.
///
/// Members of each class are shuffled with their own stream and dealt
/// round-robin; the starting fold rotates with the running class total so
/// that remainders spread evenly. Indices within a fold are ascending.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::argument(format!("k = {k}; need at least 2 folds")));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::domain(format!(
                "class {c} has {} members, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng::stream(seed, c as u64));
        for (j, &i) in members.iter().enumerate() {
            folds[(offset + j) % k].push(i);
        }
        offset += members.len();
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn take_rows<T: Scalar>(x: ArrayView2<'_, T>, idx: &[usize]) -> Array2<T> {
    x.select(Axis(0), idx)
}

/// Mean held-out accuracy over stratified folds. `fit_predict` trains on
/// its first two arguments and predicts the rows of the third.
pub fn cross_val_accuracy<T, F>(x: ArrayView2<'_, T>, y: &[usize], k: usize, seed: u64, fit_predict: &F) -> Result<f64>
where
    T: Scalar,
    F: Fn(ArrayView2<'_, T>, &[usize], ArrayView2<'_, T>) -> Result<Vec<usize>>,
{
    let folds = stratified_kfold(y, k, seed)?;
    let mut in_fold = vec![usize::MAX; y.len()];
    for (f, idx) in folds.iter().enumerate() {
        for &i in idx {
            in_fold[i] = f;
        }
    }
    let mut total = 0.0;
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = (0..y.len()).filter(|&i| in_fold[i] != f).collect();
        let ytr: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let yte: Vec<usize> = test.iter().map(|&i| y[i]).collect();
        let xtr = take_rows(x, &train);
        let xte = take_rows(x, test);
        let pred = fit_predict(xtr.view(), &ytr, xte.view())?;
        total += accuracy(&pred, &yte);
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    /// `(1 + #{null ≥ observed}) / (1 + n_perm)`.
    pub p_value: f64,
    pub null: Vec<f64>,
    /// Permutations whose fit failed; each scored at chance level.
    pub failed: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub folds: usize,
    pub n_perm: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            n_perm: 1000,
            seed: 0,
            threads: 1,
        }
    }
}

/// Cross-validated accuracy on the true labels against a null built by
/// shuffling labels and repeating the whole cross-validation. Folds are
/// re-stratified on each shuffled label vector.
pub fn permutation_test<T, F>(x: ArrayView2<'_, T>, y: &[usize], cfg: &PermutationConfig, fit_predict: F) -> Result<PermutationResult>
where
    T: Scalar,
    F: Fn(ArrayView2<'_, T>, &[usize], ArrayView2<'_, T>) -> Result<Vec<usize>> + Sync,
{
    if cfg.n_perm == 0 {
        return Err(Error::argument("need at least one permutation"));
    }
    if y.len() != x.nrows() {
        return Err(Error::argument(format!("{} labels for {} rows", y.len(), x.nrows())));
    }
    let fold_seed = rng::derive_seed(cfg.seed, "folds");
    let observed = cross_val_accuracy(x, y, cfg.folds, fold_seed, &fit_predict)?;
    let present = {
        let mut seen = y.to_vec();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    };
    let chance = 1.0 / present.max(1) as f64;
    let perm_seed = rng::derive_seed(cfg.seed, "permutations");
    let one = |p: usize| -> (f64, bool) {
        let mut yp = y.to_vec();
        yp.shuffle(&mut rng::stream(perm_seed, p as u64));
        match cross_val_accuracy(x, &yp, cfg.folds, fold_seed, &fit_predict) {
            Ok(a) => (a, false),
            Err(_) => (chance, true),
        }
    };
    let scored: Vec<(f64, bool)> = if cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Fit(format!("thread pool: {e}")))?;
        pool.install(|| (0..cfg.n_perm).into_par_iter().map(one).collect())
    } else {
        (0..cfg.n_perm).map(one).collect()
    };
    let null: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let failed = scored.iter().enumerate().filter(|(_, s)| s.1).map(|(i, _)| i).collect();
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    Ok(PermutationResult {
        observed,
        p_value: (1 + exceed) as f64 / (1 + cfg.n_perm) as f64,
        null,
        failed,
    })
}
