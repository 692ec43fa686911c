//! From-scratch classifiers and the two-level hierarchical composition.
//!
//! Every classifier maps feature rows to class indices `0..n_classes` and
//! breaks argmax ties toward the lowest class index.

pub mod forest;
pub mod hierarchical;
pub mod knn;
pub mod linear;
pub mod resnet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use forest::{fit_forest, ForestHyper, ForestModel};
pub use hierarchical::{
    fit_flat, fit_hierarchical, FlatModel, HierarchicalConfig, HierarchicalModel, HierarchicalPrediction, Level1Kind,
    Level2Kind,
};
pub use knn::{fit_knn, KnnModel};
pub use linear::{fit_logistic, fit_svm, LinearHyper, LinearKind, LinearModel};
pub use resnet::{fit_resnet1d, ResNet1dModel, ResNetHyper};

pub trait Classifier<T: Scalar> {
    fn n_classes(&self) -> usize;

    fn predict_one(&self, x: ArrayView1<'_, T>) -> usize;

    fn predict(&self, x: ArrayView2<'_, T>) -> Vec<usize> {
        x.rows().into_iter().map(|row| self.predict_one(row)).collect()
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Number of classes implied by `y` (max label + 1) after checking that at
/// least two distinct labels are present.
pub(crate) fn class_count(y: &[usize], n_rows: usize) -> Result<usize> {
    if y.len() != n_rows {
        return Err(Error::argument(format!("{} labels for {n_rows} rows", y.len())));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; n_classes];
    for &c in y {
        present[c] = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::Fit("training labels contain fewer than two classes".into()));
    }
    Ok(n_classes)
}

pub(crate) fn check_finite<T: Scalar>(x: ArrayView2<'_, T>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("features contain non-finite values"));
    }
    Ok(())
}

/// Per-feature z-scoring with statistics frozen at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: Array1<T>,
    pub std: Array1<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Features with zero spread keep unit scale.
    pub fn fit(x: ArrayView2<'_, T>) -> Self {
        let n = T::of_usize(x.nrows().max(1));
        let mean = x.sum_axis(Axis(0)).mapv(|s| s / n);
        let mut var = Array1::<T>::zeros(x.ncols());
        for row in x.rows() {
            for (j, v) in row.iter().enumerate() {
                let d = *v - mean[j];
                var[j] += d * d;
            }
        }
        let std = var.mapv(|v| {
            let s = (v / n).sqrt();
            if s > T::epsilon() {
                s
            } else {
                T::one()
            }
        });
        Self { mean, std }
    }

    pub fn transform(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            self.apply(row.view_mut());
        }
        out
    }

    pub fn transform_row(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        let mut out = x.to_owned();
        self.apply(out.view_mut());
        out
    }

    fn apply(&self, mut row: ndarray::ArrayViewMut1<'_, T>) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - self.mean[j]) / self.std[j];
        }
    }
}

/// Fraction of positions where `pred == truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}
