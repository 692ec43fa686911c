//! Statistical-moment features of daily windows.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{Channel, DailyWindow};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Population moments of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments<T> {
    pub mean: T,
    pub std: T,
    pub skewness: T,
    pub excess_kurtosis: T,
    /// Variance too small for shape statistics; skewness and kurtosis are 0.
    pub degenerate: bool,
}

/// Mean, standard deviation, skewness and excess kurtosis with divisor `n`.
///
/// When `m2 < 1e-12 · (1 + mean²)` the shape statistics are reported as 0
/// and the result is flagged degenerate.
pub fn moments<T: Scalar>(x: &[T]) -> Result<Moments<T>> {
    if x.len() < 2 {
        return Err(Error::argument("moments need at least two samples"));
    }
    let n = T::of_usize(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    let (mut m2, mut m3, mut m4) = (T::zero(), T::zero(), T::zero());
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 < T::lit(1e-12) * (T::one() + mean * mean) {
        return Ok(Moments {
            mean,
            std: m2.max(T::zero()).sqrt(),
            skewness: T::zero(),
            excess_kurtosis: T::zero(),
            degenerate: true,
        });
    }
    Ok(Moments {
        mean,
        std: m2.sqrt(),
        skewness: m3 / (m2 * m2.sqrt()),
        excess_kurtosis: m4 / (m2 * m2) - T::lit(3.0),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSetId {
    /// mean, std, skewness, kurtosis per channel
    F4,
    /// skewness, kurtosis per channel
    F2,
}

impl FeatureSetId {
    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            FeatureSetId::F4 => &["mean", "std", "skew", "kurt"],
            FeatureSetId::F2 => &["skew", "kurt"],
        }
    }

    pub fn dim(self) -> usize {
        self.metrics().len() * Channel::ALL.len()
    }

    /// Column names, channel-major (moisture block then EC block).
    pub fn names(self) -> Vec<String> {
        Channel::ALL
            .iter()
            .flat_map(|c| self.metrics().iter().map(move |m| format!("{}_{m}", c.name())))
            .collect()
    }
}

impl std::fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureSetId::F4 => "f4",
            FeatureSetId::F2 => "f2",
        })
    }
}

impl std::str::FromStr for FeatureSetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f4" => Ok(FeatureSetId::F4),
            "f2" => Ok(FeatureSetId::F2),
            other => Err(Error::argument(format!("unknown feature set `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub plant_id: String,
    pub date: NaiveDate,
    pub values: Vec<f64>,
    pub degenerate: bool,
}

pub fn feature_vector(w: &DailyWindow, set: FeatureSetId) -> FeatureVector {
    let mut values = Vec::with_capacity(set.dim());
    let mut degenerate = false;
    for c in Channel::ALL {
        let m = moments(&w.channel(c)).expect("window has 48 samples");
        degenerate |= m.degenerate;
        match set {
            FeatureSetId::F4 => values.extend([m.mean, m.std, m.skewness, m.excess_kurtosis]),
            FeatureSetId::F2 => values.extend([m.skewness, m.excess_kurtosis]),
        }
    }
    FeatureVector {
        plant_id: w.plant_id.clone(),
        date: w.date,
        values,
        degenerate,
    }
}

pub fn write_features_csv<W: Write>(out: W, set: FeatureSetId, rows: &[FeatureVector]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec!["plant_id".to_string(), "date".to_string()];
    header.extend(set.names());
    header.push("degenerate".into());
    w.write_record(&header)?;
    for fv in rows {
        let mut rec = vec![fv.plant_id.clone(), fv.date.to_string()];
        rec.extend(fv.values.iter().map(f64::to_string));
        rec.push(fv.degenerate.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn moments_of_indicator() {
        let m = moments(&[0.0f64, 0.0, 0.0, 1.0]).unwrap();
        assert!((m.mean - 0.25).abs() < 1e-15);
        assert!((m.std - 0.1875f64.sqrt()).abs() < 1e-12);
        assert!((m.skewness - 2.0 / 3.0f64.sqrt()).abs() < 1e-12);
        assert!((m.excess_kurtosis + 2.0 / 3.0).abs() < 1e-12);
        assert!(!m.degenerate);
    }

    #[test]
    fn constant_is_degenerate() {
        let m = moments(&[5.0; 48]).unwrap();
        assert_eq!((m.std, m.skewness, m.excess_kurtosis, m.degenerate), (0.0, 0.0, 0.0, true));
        assert!(moments(&[1.0]).is_err());
    }

    #[test]
    fn feature_vectors() {
        let d = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
        let w = DailyWindow::new("T-01", d, (0..48).map(|i| [(i as f64 * 0.3).sin(), 7.0]).collect()).unwrap();
        let f4 = feature_vector(&w, FeatureSetId::F4);
        let f2 = feature_vector(&w, FeatureSetId::F2);
        assert_eq!(f4.values.len(), 8);
        assert_eq!(f2.values.len(), 4);
        assert_eq!(&f2.values[2..], &[0.0, 0.0]);
        assert!(f2.degenerate);
        assert_eq!(FeatureSetId::F2.names(), ["moisture_skew", "moisture_kurt", "ec_skew", "ec_kurt"]);
    }

    proptest! {
        #[test]
        fn symmetric_samples_have_zero_skew(half in proptest::collection::vec(-100.0f64..100.0, 1..24), c in -50.0f64..50.0) {
            let mut x: Vec<f64> = half.iter().map(|v| c + v).collect();
            x.extend(half.iter().map(|v| c - v));
            let m = moments(&x).unwrap();
            prop_assert!(m.skewness.abs() < 1e-9);
        }
    }
}
