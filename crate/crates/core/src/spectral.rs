//! Leaf reflectance analysis: wavelength grid, normalized-difference
//! salinity indices, one-way ANOVA, the single-wavelength scan and PCA.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::domain::{SpectralSample, SPECTRAL_CHANNELS};
use crate::error::{Error, Result};
use crate::linalg::{centered, column_means, symmetric_eigen};
use crate::rng;
use crate::scalar::Scalar;

pub const LAMBDA_MIN_NM: f64 = 340.0;
pub const LAMBDA_MAX_NM: f64 = 850.0;

/// The spectrometer's 288-point grid over 340–850 nm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid;

impl WavelengthGrid {
    pub const N_CHANNELS: usize = SPECTRAL_CHANNELS;

    pub fn step() -> f64 {
        (LAMBDA_MAX_NM - LAMBDA_MIN_NM) / (Self::N_CHANNELS - 1) as f64
    }

    /// Centre wavelength of channel `i` in nm.
    pub fn wavelength(i: usize) -> f64 {
        if i + 1 == Self::N_CHANNELS {
            return LAMBDA_MAX_NM;
        }
        LAMBDA_MIN_NM + i as f64 * Self::step()
    }

    pub fn wavelengths() -> Vec<f64> {
        (0..Self::N_CHANNELS).map(Self::wavelength).collect()
    }
}

/// Nearest grid channel for wavelength `lambda_nm`; exact ties go to the
/// lower channel.
pub fn channel_of(lambda_nm: f64) -> Result<usize> {
    if !(LAMBDA_MIN_NM..=LAMBDA_MAX_NM).contains(&lambda_nm) {
        return Err(Error::domain(format!(
            "wavelength {lambda_nm} nm outside {LAMBDA_MIN_NM}-{LAMBDA_MAX_NM} nm"
        )));
    }
    // Work in units of (span / (n-1)) scaled by the span so integer
    // wavelengths resolve ties exactly.
    let span = LAMBDA_MAX_NM - LAMBDA_MIN_NM;
    let scaled = (lambda_nm - LAMBDA_MIN_NM) * (WavelengthGrid::N_CHANNELS - 1) as f64;
    let lower = (scaled / span).floor();
    let rem = scaled - lower * span;
    let idx = if rem > span / 2.0 { lower + 1.0 } else { lower };
    Ok((idx as usize).min(WavelengthGrid::N_CHANNELS - 1))
}

/// Two-wavelength normalized-difference indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralIndex {
    /// (R665 − R842)/(R665 + R842)
    Ndsi,
    /// (R705 − R750)/(R705 + R750)
    Ni,
    /// (R600 − R800)/(R600 + R800)
    N1,
}

impl SpectralIndex {
    pub const ALL: [SpectralIndex; 3] = [SpectralIndex::Ndsi, SpectralIndex::Ni, SpectralIndex::N1];

    pub fn wavelengths(self) -> (f64, f64) {
        match self {
            SpectralIndex::Ndsi => (665.0, 842.0),
            SpectralIndex::Ni => (705.0, 750.0),
            SpectralIndex::N1 => (600.0, 800.0),
        }
    }

    pub fn channels(self) -> (usize, usize) {
        let (a, b) = self.wavelengths();
        (
            channel_of(a).expect("index wavelength on grid"),
            channel_of(b).expect("index wavelength on grid"),
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            SpectralIndex::Ndsi => "ndsi",
            SpectralIndex::Ni => "ni",
            SpectralIndex::N1 => "n1",
        }
    }

    /// Evaluates the index on a full 288-channel reflectance vector.
    pub fn eval<T: Scalar>(self, reflectance: &[T]) -> Result<T> {
        if reflectance.len() != SPECTRAL_CHANNELS {
            return Err(Error::argument(format!(
                "expected {SPECTRAL_CHANNELS} channels, got {}",
                reflectance.len()
            )));
        }
        let (a, b) = self.channels();
        normalized_difference(reflectance[a], reflectance[b]).map_err(|_| {
            Error::domain(format!(
                "degenerate {}: R{} + R{} = 0",
                self.name(),
                self.wavelengths().0,
                self.wavelengths().1
            ))
        })
    }
}

impl std::str::FromStr for SpectralIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ndsi" => Ok(SpectralIndex::Ndsi),
            "ni" => Ok(SpectralIndex::Ni),
            "n1" => Ok(SpectralIndex::N1),
            other => Err(Error::argument(format!("unknown spectral index `{other}`"))),
        }
    }
}

/// `(a − b)/(a + b)`; zero denominator is a domain error.
pub fn normalized_difference<T: Scalar>(a: T, b: T) -> Result<T> {
    let den = a + b;
    if den == T::zero() || !den.is_finite() {
        return Err(Error::domain("normalized difference with zero denominator"));
    }
    Ok((a - b) / den)
}

pub fn ndsi(s: &SpectralSample) -> Result<f64> {
    SpectralIndex::Ndsi.eval(&s.reflectance)
}

pub fn ni(s: &SpectralSample) -> Result<f64> {
    SpectralIndex::Ni.eval(&s.reflectance)
}

pub fn n1(s: &SpectralSample) -> Result<f64> {
    SpectralIndex::N1.eval(&s.reflectance)
}

/// One-way ANOVA F statistic.
pub fn anova_f<T: Scalar>(groups: &[Vec<T>]) -> Result<T> {
    if groups.len() < 2 {
        return Err(Error::domain("ANOVA needs at least two groups"));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::domain("every ANOVA group needs at least two values"));
    }
    let n_total: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    let grand = groups.iter().flatten().copied().sum::<T>() / T::of_usize(n_total);

    let mut ssb = T::zero();
    let mut ssw = T::zero();
    let mut sst = T::zero();
    for g in groups {
        let mean = g.iter().copied().sum::<T>() / T::of_usize(g.len());
        ssb += T::of_usize(g.len()) * (mean - grand) * (mean - grand);
        for &x in g {
            ssw += (x - mean) * (x - mean);
            sst += (x - grand) * (x - grand);
        }
    }
    if !(sst > T::zero()) {
        return Err(Error::domain("ANOVA on data with zero total variance"));
    }
    if ssw <= sst * T::epsilon() * T::lit(16.0) {
        return Err(Error::domain("ANOVA within-group variance is zero (F is infinite)"));
    }
    let df_between = T::of_usize(k - 1);
    let df_within = T::of_usize(n_total - k);
    Ok((ssb / df_between) / (ssw / df_within))
}

/// How [`anova_p`] turns an F statistic into a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum AnovaMode {
    /// Label-shuffle null with the add-one estimator.
    Permutation { n_perm: usize, seed: u64 },
    /// Upper tail of the F distribution.
    Analytic,
}

impl Default for AnovaMode {
    fn default() -> Self {
        AnovaMode::Permutation {
            n_perm: 2000,
            seed: 0,
        }
    }
}

pub fn anova_p<T: Scalar>(groups: &[Vec<T>], mode: AnovaMode) -> Result<f64> {
    let f_obs = anova_f(groups)?;
    match mode {
        AnovaMode::Analytic => {
            let n_total: usize = groups.iter().map(Vec::len).sum();
            let d1 = (groups.len() - 1) as f64;
            let d2 = (n_total - groups.len()) as f64;
            f_upper_tail(f_obs.as_f64(), d1, d2)
        }
        AnovaMode::Permutation { n_perm, seed } => {
            if n_perm == 0 {
                return Err(Error::argument("permutation ANOVA needs n_perm >= 1"));
            }
            let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
            let mut pooled: Vec<T> = groups.iter().flatten().copied().collect();
            let mut rng = rng::stream(seed, 0x414e_4f56);
            let threshold = f_obs - f_obs.abs() * T::lit(1e-12);
            let mut exceed = 0usize;
            let mut shuffled = vec![Vec::new(); sizes.len()];
            for _ in 0..n_perm {
                pooled.shuffle(&mut rng);
                let mut offset = 0;
                for (g, &sz) in shuffled.iter_mut().zip(&sizes) {
                    g.clear();
                    g.extend_from_slice(&pooled[offset..offset + sz]);
                    offset += sz;
                }
                // A shuffle can only collapse within-group variance when the
                // pooled data are themselves degenerate; count that as extreme.
                let f = anova_f(&shuffled).unwrap_or(T::infinity());
                if f >= threshold {
                    exceed += 1;
                }
            }
            Ok((1 + exceed) as f64 / (1 + n_perm) as f64)
        }
    }
}

/// `P(F(d1, d2) ≥ f)`.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> Result<f64> {
    if !f.is_finite() || f < 0.0 {
        return Err(Error::domain(format!("invalid F statistic {f}")));
    }
    let dist = FisherSnedecor::new(d1, d2)
        .map_err(|e| Error::domain(format!("F distribution ({d1}, {d2}): {e}")))?;
    Ok(dist.sf(f).clamp(0.0, 1.0))
}

/// Single-wavelength ANOVA scan result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwScan {
    pub p_values: Vec<f64>,
    /// Channels where ANOVA was undefined (reported with p = 1).
    pub degenerate: Vec<bool>,
    pub min_p: f64,
    pub min_channel: usize,
    /// Bonferroni bound `min(1, n_channels · min_p)`.
    pub adjusted_min: f64,
}

/// Runs one-way ANOVA independently on every channel.
///
/// `groups[g]` holds the reflectance vectors of group `g`.
pub fn sw_scan<T: Scalar>(groups: &[Vec<Vec<T>>], mode: AnovaMode) -> Result<SwScan> {
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::domain("single-wavelength scan needs >= 2 groups of >= 2 samples"));
    }
    let n_channels = groups[0][0].len();
    if groups.iter().flatten().any(|s| s.len() != n_channels) {
        return Err(Error::argument("spectra have inconsistent channel counts"));
    }
    let mut p_values = Vec::with_capacity(n_channels);
    let mut degenerate = Vec::with_capacity(n_channels);
    for ch in 0..n_channels {
        let per_group: Vec<Vec<T>> = groups
            .iter()
            .map(|g| g.iter().map(|s| s[ch]).collect())
            .collect();
        let mode = match mode {
            AnovaMode::Permutation { n_perm, seed } => AnovaMode::Permutation {
                n_perm,
                seed: rng::derive_seed(seed, &format!("channel{ch}")),
            },
            m => m,
        };
        match anova_p(&per_group, mode) {
            Ok(p) => {
                p_values.push(p);
                degenerate.push(false);
            }
            Err(Error::Domain(_)) => {
                p_values.push(1.0);
                degenerate.push(true);
            }
            Err(e) => return Err(e),
        }
    }
    let (min_channel, min_p) = p_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, p)| if p < acc.1 { (i, p) } else { acc });
    Ok(SwScan {
        adjusted_min: (n_channels as f64 * min_p).min(1.0),
        p_values,
        degenerate,
        min_p,
        min_channel,
    })
}

/// Principal component model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel<T> {
    pub mean: Array1<T>,
    /// `k × d`, orthonormal rows.
    pub components: Array2<T>,
    /// Sample variance (divisor n − 1) captured by each component.
    pub explained_variance: Vec<T>,
    /// Sum of per-feature sample variances of the training data.
    pub total_variance: T,
}

impl<T: Scalar> PcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn explained_variance_ratio(&self) -> Vec<T> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > T::zero() { *v / self.total_variance } else { T::zero() })
            .collect()
    }

    pub fn inverse_transform(&self, scores: ArrayView2<'_, T>) -> Array2<T> {
        let mut x = scores.dot(&self.components);
        for mut row in x.rows_mut() {
            row += &self.mean;
        }
        x
    }
}

/// Fits the top-`k` principal directions of `x` (`n × d`).
pub fn pca_fit<T: Scalar>(x: ArrayView2<'_, T>, k: usize) -> Result<PcaModel<T>> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::argument("PCA needs at least two samples"));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::argument(format!(
            "PCA k={k} outside 1..={} for a {n}x{d} matrix",
            (n - 1).min(d)
        )));
    }
    let mean = column_means(x);
    let xc = centered(x, &mean);
    let denom = T::of_usize(n - 1);
    let total_variance = xc.iter().map(|v| *v * *v).sum::<T>() / denom;

    let (values, directions) = if d <= n {
        let cov = xc.t().dot(&xc).mapv(|v| v / denom);
        let (vals, vecs) = symmetric_eigen(&cov);
        let dirs: Vec<Array1<T>> = (0..k).map(|i| vecs.column(i).to_owned()).collect();
        (vals[..k].to_vec(), dirs)
    } else {
        // Fewer samples than features: diagonalize the n × n Gram matrix and
        // map its eigenvectors back to feature space.
        let gram = xc.dot(&xc.t()).mapv(|v| v / denom);
        let (vals, vecs) = symmetric_eigen(&gram);
        let floor = vals[0].abs() * T::epsilon() * T::of_usize(n.max(d)) * T::lit(8.0);
        let mut dirs: Vec<Array1<T>> = Vec::with_capacity(k);
        for i in 0..k {
            if vals[i] > floor {
                let mut v = xc.t().dot(&vecs.column(i));
                let norm = v.dot(&v).sqrt();
                v.mapv_inplace(|e| e / norm);
                dirs.push(v);
            } else {
                dirs.push(orthogonal_complement_vector(&dirs, d));
            }
        }
        (vals[..k].to_vec(), dirs)
    };

    let mut components = Array2::<T>::zeros((k, d));
    for (i, mut dir) in directions.into_iter().enumerate() {
        let pivot = dir
            .iter()
            .enumerate()
            .fold((0, T::zero()), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc })
            .0;
        if dir[pivot] < T::zero() {
            dir.mapv_inplace(|e| -e);
        }
        components.row_mut(i).assign(&dir);
    }
    let explained_variance = values.into_iter().map(|v| v.max(T::zero())).collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

/// Unit vector orthogonal to every vector in `basis`.
fn orthogonal_complement_vector<T: Scalar>(basis: &[Array1<T>], d: usize) -> Array1<T> {
    let mut best: Option<(T, Array1<T>)> = None;
    for axis in 0..d {
        let mut v = Array1::<T>::zeros(d);
        v[axis] = T::one();
        for b in basis {
            let proj = b.dot(&v);
            v.scaled_add(-proj, b);
        }
        let norm = v.dot(&v).sqrt();
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, v));
        }
    }
    let (norm, v) = best.expect("d >= 1");
    v.mapv(|e| e / norm)
}

/// Projects `x` onto the model's components (`n × k` scores).
pub fn pca_transform<T: Scalar>(model: &PcaModel<T>, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    if x.ncols() != model.mean.len() {
        return Err(Error::argument(format!(
            "PCA model expects {} features, got {}",
            model.mean.len(),
            x.ncols()
        )));
    }
    Ok(centered(x, &model.mean).dot(&model.components.t()))
}
