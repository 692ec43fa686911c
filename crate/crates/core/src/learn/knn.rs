//! Euclidean k-nearest-neighbour classifier.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_finite, Classifier};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default neighbourhood size.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel<T> {
    pub train_x: Array2<T>,
    pub train_y: Vec<usize>,
    pub k: usize,
    pub n_classes: usize,
}

pub fn fit_knn<T: Scalar>(x: ArrayView2<'_, T>, y: &[usize], k: usize) -> Result<KnnModel<T>> {
    if y.len() != x.nrows() {
        return Err(Error::argument(format!("{} labels for {} rows", y.len(), x.nrows())));
    }
    if k == 0 || k > x.nrows() {
        return Err(Error::argument(format!("k={k} must be in 1..={}", x.nrows())));
    }
    check_finite(x)?;
    Ok(KnnModel {
        train_x: x.to_owned(),
        train_y: y.to_vec(),
        k,
        n_classes: y.iter().max().map_or(1, |m| m + 1),
    })
}

impl<T: Scalar> Classifier<T> for KnnModel<T> {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Majority vote of the `k` nearest points (distance ties by training
    /// order). Vote ties go to the class with the smallest mean distance,
    /// then to the lowest class index.
    fn predict_one(&self, q: ArrayView1<'_, T>) -> usize {
        let mut dist: Vec<(T, usize)> = self
            .train_x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let d2 = row.iter().zip(q.iter()).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>();
                (d2.sqrt(), i)
            })
            .collect();
        let by_distance = |a: &(T, usize), b: &(T, usize)| {
            a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1))
        };
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_distance);
            dist.truncate(self.k);
        }
        let mut votes = vec![0usize; self.n_classes];
        let mut dsum = vec![T::zero(); self.n_classes];
        for &(d, i) in &dist {
            votes[self.train_y[i]] += 1;
            dsum[self.train_y[i]] += d;
        }
        let top = *votes.iter().max().expect("k >= 1");
        (0..self.n_classes)
            .filter(|&c| votes[c] == top)
            .map(|c| (dsum[c] / T::of_usize(top), c))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)))
            .expect("at least one class")
            .1
    }
}
