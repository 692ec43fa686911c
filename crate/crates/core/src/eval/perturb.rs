//! Robustness perturbations: dropped sensor readings and input noise.

use std::collections::HashMap;

use ndarray::ArrayViewMut2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::SoilReading;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    /// Fraction of raw readings removed before preprocessing.
    pub mask_fraction: f64,
    /// Standard deviation of noise added on the standardized model inputs.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            mask_fraction: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl Perturbation {
    pub fn masking(fraction: f64, seed: u64) -> Self {
        Self {
            mask_fraction: fraction,
            seed,
            ..Self::default()
        }
    }

    pub fn noise(sigma: f64, seed: u64) -> Self {
        Self {
            noise_sigma: sigma,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mask_fraction) {
            return Err(Error::argument(format!("mask fraction {} not in [0, 1)", self.mask_fraction)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma < 1.0) {
            return Err(Error::argument(format!("noise sigma {} not in [0, 1)", self.noise_sigma)));
        }
        Ok(())
    }

    /// Drops each reading independently with probability `mask_fraction`.
    /// Each plant draws from its own stream. Returns the kept readings and
    /// the number removed.
    pub fn mask(&self, readings: &[SoilReading]) -> Result<(Vec<SoilReading>, usize)> {
        self.validate()?;
        if self.mask_fraction == 0.0 {
            return Ok((readings.to_vec(), 0));
        }
        let seed = rng::derive_seed(self.seed, "mask");
        let mut streams: HashMap<&str, StreamRng> = HashMap::new();
        let mut kept = Vec::with_capacity(readings.len());
        for r in readings {
            let s = streams
                .entry(r.plant_id.as_str())
                .or_insert_with(|| rng::named_stream(seed, &r.plant_id));
            if s.random::<f64>() >= self.mask_fraction {
                kept.push(r.clone());
            }
        }
        let masked = readings.len() - kept.len();
        Ok((kept, masked))
    }

    /// Adds `N(0, noise_sigma²)` to every entry; row `i` uses stream `i`.
    pub fn add_noise<T: Scalar>(&self, mut x: ArrayViewMut2<'_, T>) -> Result<()> {
        self.validate()?;
        if self.noise_sigma == 0.0 {
            return Ok(());
        }
        let seed = rng::derive_seed(self.seed, "noise");
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let mut r = rng::stream(seed, i as u64);
            row.iter_mut()
                .for_each(|v| *v += T::lit(self.noise_sigma * r.sample::<f64, _>(StandardNormal)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn readings(n: usize) -> Vec<SoilReading> {
        (0..n)
            .map(|i| SoilReading {
                timestamp: i as i64 * 1800,
                plant_id: format!("T-{:02}", i % 7),
                moisture: 30.0,
                ec: 900.0,
            })
            .collect()
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let r = readings(100);
        let p = Perturbation::default();
        assert_eq!(p.mask(&r).unwrap(), (r.clone(), 0));
        let mut x = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64);
        let before = x.clone();
        p.add_noise(x.view_mut()).unwrap();
        assert_eq!(x, before);
    }

    #[test]
    fn masked_count_is_binomial() {
        let n = 20_000;
        let (kept, masked) = Perturbation::masking(0.2, 3).mask(&readings(n)).unwrap();
        assert_eq!(kept.len() + masked, n);
        let sd = (n as f64 * 0.2 * 0.8).sqrt();
        assert!((masked as f64 - 0.2 * n as f64).abs() < 3.0 * sd);
    }

    #[test]
    fn small_noise_stays_bounded() {
        let mut x = Array2::<f64>::zeros((200, 10));
        Perturbation::noise(0.05, 1).add_noise(x.view_mut()).unwrap();
        assert!(x.iter().all(|v| v.abs() < 0.25));
        assert!(x.iter().any(|v| *v != 0.0));
        assert!(Perturbation::masking(1.0, 0).validate().is_err());
    }
}
