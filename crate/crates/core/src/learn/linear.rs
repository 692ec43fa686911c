//! Linear classifiers: one-vs-rest linear SVM trained with Pegasos, and
//! multinomial logistic regression trained with full-batch gradient descent.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{argmax, check_finite, class_count, Classifier};
use crate::error::Result;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Svm,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearHyper {
    /// L2 regularization strength.
    pub lambda: f64,
    pub epochs: usize,
    /// Gradient-descent step (logistic only; Pegasos uses `1/(λt)`).
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LinearHyper {
    fn default() -> Self {
        Self::svm()
    }
}

impl LinearHyper {
    pub fn svm() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 100,
            learning_rate: 0.0,
            seed: 0,
        }
    }

    pub fn logistic() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 300,
            learning_rate: 0.5,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    pub kind: LinearKind,
    /// `n_classes × d`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub hyper: LinearHyper,
}

impl<T: Scalar> LinearModel<T> {
    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn decision(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        self.weights.dot(&x) + &self.bias
    }

    /// Softmax class probabilities (meaningful for the logistic kind).
    pub fn probabilities(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        softmax(self.decision(x).view())
    }
}

impl<T: Scalar> Classifier<T> for LinearModel<T> {
    fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    fn predict_one(&self, x: ArrayView1<'_, T>) -> usize {
        argmax(self.decision(x).as_slice().expect("contiguous"))
    }
}

pub(crate) fn softmax<T: Scalar>(z: ArrayView1<'_, T>) -> Array1<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e = z.mapv(|v| (v - max).exp());
    let s = e.sum();
    e / s
}

/// One-vs-rest L2-regularized hinge loss, minimized by Pegasos.
///
/// Each binary problem takes `epochs · n` steps of size `1/(λt)` over a
/// seeded reshuffle per epoch, with the bias carried as a constant feature
/// and the iterate projected onto the `1/√λ` ball. The returned weights
/// are the average of the iterates over the second half of training.
pub fn fit_svm<T: Scalar>(x: ArrayView2<'_, T>, y: &[usize], hyper: &LinearHyper) -> Result<LinearModel<T>> {
    let n_classes = class_count(y, x.nrows())?;
    check_finite(x)?;
    let (n, d) = x.dim();
    let lambda = T::lit(hyper.lambda);
    let radius = T::one() / lambda.sqrt();
    let total_steps = hyper.epochs.max(1) * n;
    let average_from = total_steps / 2;

    let mut weights = Array2::<T>::zeros((n_classes, d));
    let mut bias = Array1::<T>::zeros(n_classes);
    for class in 0..n_classes {
        let mut rng = rng::stream(hyper.seed, class as u64);
        let mut w = vec![T::zero(); d + 1];
        let mut avg = vec![T::zero(); d + 1];
        let mut n_avg = 0usize;
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0usize;
        for _ in 0..hyper.epochs.max(1) {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = T::one() / (lambda * T::of_usize(t));
                let row = x.row(i);
                let target = if y[i] == class { T::one() } else { -T::one() };
                let margin = target * (row.iter().zip(&w).map(|(a, b)| *a * *b).sum::<T>() + w[d]);
                let shrink = T::one() - eta * lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < T::one() {
                    for (wj, xj) in w.iter_mut().zip(row.iter()) {
                        *wj += eta * target * *xj;
                    }
                    w[d] += eta * target;
                }
                let norm = w.iter().map(|v| *v * *v).sum::<T>().sqrt();
                if norm > radius {
                    let s = radius / norm;
                    w.iter_mut().for_each(|v| *v *= s);
                }
                if t > average_from {
                    n_avg += 1;
                    for (a, v) in avg.iter_mut().zip(&w) {
                        *a += *v;
                    }
                }
            }
        }
        let denom = T::of_usize(n_avg.max(1));
        for j in 0..d {
            weights[[class, j]] = avg[j] / denom;
        }
        bias[class] = avg[d] / denom;
    }
    Ok(LinearModel {
        kind: LinearKind::Svm,
        weights,
        bias,
        hyper: *hyper,
    })
}

/// Mean multinomial cross-entropy plus `λ/2 · ‖W‖²`, and its gradient.
pub fn logistic_loss_grad<T: Scalar>(
    weights: &Array2<T>,
    bias: &Array1<T>,
    x: ArrayView2<'_, T>,
    y: &[usize],
    lambda: T,
) -> (T, Array2<T>, Array1<T>) {
    let n = T::of_usize(x.nrows());
    let mut loss = T::zero();
    let mut gw = Array2::<T>::zeros(weights.raw_dim());
    let mut gb = Array1::<T>::zeros(bias.len());
    for (row, &label) in x.rows().into_iter().zip(y) {
        let p = softmax((weights.dot(&row) + bias).view());
        loss -= p[label].max(T::min_positive_value()).ln();
        for c in 0..p.len() {
            let delta = p[c] - if c == label { T::one() } else { T::zero() };
            gb[c] += delta;
            gw.row_mut(c).scaled_add(delta, &row);
        }
    }
    loss = loss / n + lambda / T::lit(2.0) * weights.iter().map(|v| *v * *v).sum::<T>();
    gw.mapv_inplace(|v| v / n);
    gw.scaled_add(lambda, weights);
    gb.mapv_inplace(|v| v / n);
    (loss, gw, gb)
}

/// Multinomial logistic regression from zero initialization.
pub fn fit_logistic<T: Scalar>(x: ArrayView2<'_, T>, y: &[usize], hyper: &LinearHyper) -> Result<LinearModel<T>> {
    let n_classes = class_count(y, x.nrows())?;
    check_finite(x)?;
    let lambda = T::lit(hyper.lambda);
    let lr = T::lit(hyper.learning_rate);
    let mut weights = Array2::<T>::zeros((n_classes, x.ncols()));
    let mut bias = Array1::<T>::zeros(n_classes);
    for _ in 0..hyper.epochs {
        let (_, gw, gb) = logistic_loss_grad(&weights, &bias, x, y, lambda);
        weights.scaled_add(-lr, &gw);
        bias.scaled_add(-lr, &gb);
    }
    Ok(LinearModel {
        kind: LinearKind::Logistic,
        weights,
        bias,
        hyper: *hyper,
    })
}
