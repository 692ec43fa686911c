//! Confusion matrices and the accuracy / precision / recall / F1 family.

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_predictions(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::argument(format!("{} predictions for {} labels", pred.len(), truth.len())));
        }
        let mut cm = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::argument(format!("class index out of range 0..{n_classes}")));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    /// Positive class 1, negative class 0.
    pub fn binary(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self {
            counts: vec![vec![tn, fp], vec![fn_, tp]],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<N> {
    pub precision: N,
    pub recall: N,
    pub f1: N,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics<N> {
    pub accuracy: N,
    pub precision_weighted: N,
    pub recall_weighted: N,
    pub f1_weighted: N,
    pub precision_macro: N,
    pub recall_macro: N,
    pub f1_macro: N,
    pub per_class: Vec<ClassMetrics<N>>,
}

fn ratio<N: Num + Clone + FromPrimitive>(num: u64, den: u64) -> N {
    if den == 0 {
        N::zero()
    } else {
        N::from_u64(num).expect("count fits") / N::from_u64(den).expect("count fits")
    }
}

fn harmonic<N: Num + Clone + FromPrimitive>(p: N, r: N) -> N {
    let s = p.clone() + r.clone();
    if s == N::zero() {
        N::zero()
    } else {
        N::from_u8(2).expect("2") * p * r / s
    }
}

/// One-vs-rest precision, recall and F1 for class `c`. With no predicted
/// (or no true) members the corresponding rate is 0.
pub fn class_metrics<N: Num + Clone + FromPrimitive>(cm: &ConfusionMatrix, c: usize) -> ClassMetrics<N> {
    let tp = cm.counts[c][c];
    let precision: N = ratio(tp, cm.predicted(c));
    let recall: N = ratio(tp, cm.support(c));
    ClassMetrics {
        f1: harmonic(precision.clone(), recall.clone()),
        precision,
        recall,
        support: cm.support(c),
    }
}

/// Accuracy plus support-weighted and unweighted (macro) averages of the
/// per-class rates. Works in any numeric type, including exact rationals.
pub fn metrics<N: Num + Clone + FromPrimitive>(cm: &ConfusionMatrix) -> Result<Metrics<N>> {
    let total = cm.total();
    if cm.n_classes() == 0 || total == 0 {
        return Err(Error::argument("confusion matrix is empty"));
    }
    let k = cm.n_classes();
    let per_class: Vec<ClassMetrics<N>> = (0..k).map(|c| class_metrics(cm, c)).collect();
    let n_total = N::from_u64(total).expect("count fits");
    let n_k = N::from_usize(k).expect("class count fits");
    let weighted = |f: &dyn Fn(&ClassMetrics<N>) -> N| {
        per_class
            .iter()
            .fold(N::zero(), |acc, m| acc + f(m) * N::from_u64(m.support).expect("count fits"))
            / n_total.clone()
    };
    let macro_avg = |f: &dyn Fn(&ClassMetrics<N>) -> N| per_class.iter().fold(N::zero(), |acc, m| acc + f(m)) / n_k.clone();
    Ok(Metrics {
        accuracy: ratio(cm.correct(), total),
        precision_weighted: weighted(&|m| m.precision.clone()),
        recall_weighted: weighted(&|m| m.recall.clone()),
        f1_weighted: weighted(&|m| m.f1.clone()),
        precision_macro: macro_avg(&|m| m.precision.clone()),
        recall_macro: macro_avg(&|m| m.recall.clone()),
        f1_macro: macro_avg(&|m| m.f1.clone()),
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    #[test]
    fn binary_hand_example_is_exact() {
        let cm = ConfusionMatrix::binary(50, 30, 10, 10);
        let m: Metrics<Q> = metrics(&cm).unwrap();
        assert_eq!(m.accuracy, Q::new(4, 5));
        let pos = &m.per_class[1];
        assert_eq!(pos.precision, Q::new(5, 6));
        assert_eq!(pos.recall, Q::new(5, 6));
        assert_eq!(pos.f1, Q::new(5, 6));
    }

    #[test]
    fn perfect_diagonal() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        let m: Metrics<f64> = metrics(&cm).unwrap();
        for v in [m.accuracy, m.precision_weighted, m.recall_weighted, m.f1_weighted, m.f1_macro] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn weighted_recall_is_accuracy() {
        let cm = ConfusionMatrix {
            counts: vec![vec![5, 2, 1], vec![0, 7, 3], vec![4, 0, 9]],
        };
        let m: Metrics<Q> = metrics(&cm).unwrap();
        assert_eq!(m.recall_weighted, m.accuracy);
        assert_eq!(m.accuracy, Q::new(21, 31));
    }

    #[test]
    fn zero_predictions_give_zero_precision() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1, 1], &[1, 1, 1], 2).unwrap();
        let m: Metrics<Q> = metrics(&cm).unwrap();
        assert_eq!(m.per_class[0].precision, Q::from_integer(0));
        assert_eq!(m.per_class[0].f1, Q::from_integer(0));
        assert!(metrics::<f64>(&ConfusionMatrix::new(2)).is_err());
    }
}
