//! Evaluation: metrics, cross-validation, permutation tests, clustering
//! validity, robustness perturbations and per-period stability.

pub mod cluster;
pub mod cv;
pub mod metrics;
pub mod perturb;

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{treatment_to_pair, DailyWindow, Treatment};
use crate::error::{Error, Result};
use crate::learn::hierarchical::{HierarchicalModel, HierarchicalPrediction};
use crate::scalar::Scalar;

pub use cluster::{chi, silhouette};
pub use cv::{cross_val_accuracy, permutation_test, stratified_kfold, PermutationConfig, PermutationResult};
pub use metrics::{metrics, ClassMetrics, ConfusionMatrix, Metrics};
pub use perturb::Perturbation;

/// Held-out evaluation summary. Field order is the JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub split: String,
    pub seed: u64,
    pub n_test: usize,
    pub classes: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub per_class: Vec<ClassMetrics<f64>>,
    pub p_value: Option<f64>,
    /// Level-1 pair accuracy, for hierarchical models.
    pub pair_accuracy: Option<f64>,
    /// Predictions whose treatment lies outside the predicted pair.
    pub pair_violations: Option<usize>,
}

impl EvalReport {
    pub fn from_confusion(model: impl Into<String>, split: impl Into<String>, seed: u64, classes: Vec<String>, cm: ConfusionMatrix) -> Result<Self> {
        if classes.len() != cm.n_classes() {
            return Err(Error::argument("class names do not match the confusion matrix"));
        }
        let m: Metrics<f64> = metrics(&cm)?;
        debug_assert!((m.recall_weighted - m.accuracy).abs() < 1e-12);
        Ok(Self {
            model: model.into(),
            split: split.into(),
            seed,
            n_test: cm.total() as usize,
            classes,
            confusion: cm,
            accuracy: m.accuracy,
            precision_weighted: m.precision_weighted,
            recall_weighted: m.recall_weighted,
            f1_weighted: m.f1_weighted,
            precision_macro: m.precision_macro,
            recall_macro: m.recall_macro,
            f1_macro: m.f1_macro,
            per_class: m.per_class,
            p_value: None,
            pair_accuracy: None,
            pair_violations: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Long-format `metric,class,value` rows followed by the confusion
    /// counts as `confusion,<true>/<predicted>,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["metric", "class", "value"])?;
        let mut put = |m: &str, c: &str, v: String| w.write_record([m, c, v.as_str()]);
        for (name, v) in [
            ("accuracy", self.accuracy),
            ("precision_weighted", self.precision_weighted),
            ("recall_weighted", self.recall_weighted),
            ("f1_weighted", self.f1_weighted),
            ("precision_macro", self.precision_macro),
            ("recall_macro", self.recall_macro),
            ("f1_macro", self.f1_macro),
        ] {
            put(name, "all", v.to_string())?;
        }
        if let Some(p) = self.p_value {
            put("p_value", "all", p.to_string())?;
        }
        if let Some(p) = self.pair_accuracy {
            put("pair_accuracy", "all", p.to_string())?;
        }
        for (c, m) in self.classes.iter().zip(&self.per_class) {
            put("precision", c, m.precision.to_string())?;
            put("recall", c, m.recall.to_string())?;
            put("f1", c, m.f1.to_string())?;
            put("support", c, m.support.to_string())?;
        }
        for (i, row) in self.confusion.counts.iter().enumerate() {
            for (j, n) in row.iter().enumerate() {
                put("confusion", &format!("{}/{}", self.classes[i], self.classes[j]), n.to_string())?;
            }
        }
        drop(put);
        w.flush()?;
        Ok(())
    }
}

pub fn treatment_names() -> Vec<String> {
    Treatment::ALL.iter().map(|t| t.as_str().to_string()).collect()
}

/// Report for hierarchical predictions, including the level-1 pair
/// accuracy and the pair-consistency violation count.
pub fn hierarchical_report(
    model: impl Into<String>,
    split: impl Into<String>,
    seed: u64,
    pred: &[HierarchicalPrediction],
    truth: &[Treatment],
) -> Result<EvalReport> {
    let t: Vec<usize> = truth.iter().map(|t| t.index()).collect();
    let p: Vec<usize> = pred.iter().map(|p| p.treatment.index()).collect();
    let cm = ConfusionMatrix::from_predictions(&t, &p, Treatment::ALL.len())?;
    let mut r = EvalReport::from_confusion(model, split, seed, treatment_names(), cm)?;
    let pair_hits = pred.iter().zip(truth).filter(|(p, t)| p.pair == treatment_to_pair(**t)).count();
    r.pair_accuracy = Some(pair_hits as f64 / truth.len().max(1) as f64);
    r.pair_violations = Some(pred.iter().filter(|p| !p.pair.contains(p.treatment)).count());
    Ok(r)
}

/// Predicts `windows` and reports against `truth`; a non-zero
/// `noise.noise_sigma` perturbs the standardized inputs.
pub fn evaluate_hierarchical<T: Scalar>(
    model: &HierarchicalModel<T>,
    windows: &[DailyWindow],
    truth: &[Treatment],
    split: &str,
    noise: &Perturbation,
) -> Result<EvalReport> {
    if windows.len() != truth.len() {
        return Err(Error::argument(format!("{} labels for {} windows", truth.len(), windows.len())));
    }
    noise.validate()?;
    let pred = if noise.noise_sigma > 0.0 {
        model.predict_noisy(windows, noise.noise_sigma, crate::rng::derive_seed(noise.seed, "noise"))
    } else {
        model.predict(windows)
    };
    hierarchical_report(model.config.descriptor(), split, model.config.seed, &pred, truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub start: NaiveDate,
    /// Exclusive.
    pub end: NaiveDate,
    pub report: EvalReport,
}

/// One report per half-open period `[b_i, b_{i+1})`, in chronological
/// order. Periods without windows are skipped with a warning.
pub fn period_stability<T: Scalar>(
    model: &HierarchicalModel<T>,
    windows: &[DailyWindow],
    truth: &[Treatment],
    boundaries: &[NaiveDate],
) -> Result<Vec<PeriodReport>> {
    if boundaries.len() < 2 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::argument("period boundaries must be at least two strictly increasing dates"));
    }
    let mut out = Vec::new();
    for b in boundaries.windows(2) {
        let idx: Vec<usize> = (0..windows.len())
            .filter(|&i| b[0] <= windows[i].date && windows[i].date < b[1])
            .collect();
        if idx.is_empty() {
            log::warn!("period [{}, {}) has no windows; skipped", b[0], b[1]);
            continue;
        }
        let w: Vec<DailyWindow> = idx.iter().map(|&i| windows[i].clone()).collect();
        let t: Vec<Treatment> = idx.iter().map(|&i| truth[i]).collect();
        let split = format!("period [{}, {})", b[0], b[1]);
        let report = evaluate_hierarchical(model, &w, &t, &split, &Perturbation::default())?;
        out.push(PeriodReport {
            start: b[0],
            end: b[1],
            report,
        });
    }
    Ok(out)
}
