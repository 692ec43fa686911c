//! Seeded synthetic greenhouse data with planted treatment effects.
//!
//! Soil model, per plant and per half-hour slot `s` since the daily watering:
//!
//! * moisture: `low + amp · exp(-r · s)`, a daily sawtooth. PRR-bearing
//!   treatments slow the drain rate `r` by `prr_moisture_decay_factor`.
//! * EC: a baseline that rises as the pot dries, plus for salinity-bearing
//!   treatments a constant `salinity_ec_shift` and a broad post-watering
//!   salt pulse of relative size `salinity_skew_shift`. PRR-bearing
//!   treatments add a sharp pulse of relative size `prr_kurtosis_shift`.
//!
//! Treatment effects are multiplied by the rootstock attenuation and by
//! the optional onset ramp. Plant-level and day-level jitter plus Gaussian
//! reading noise make groups overlap. Spectra are a smooth vegetation
//! curve with shared gain/offset/tilt nuisance and a weak treatment
//! signature spread over a contiguous pigment band.
//!
//! Randomness comes from one ChaCha8 stream per plant (see [`crate::rng`]),
//! so output is independent of generation order.

use std::collections::{BTreeMap, HashSet};

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    PlantMeta, Rootstock, SoilReading, SpectralSample, Treatment, GRID_STEP_SECS, SLOTS_PER_DAY,
    SPECTRAL_CHANNELS,
};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::spectral::{channel_of, WavelengthGrid};

/// Slot of the daily watering (07:00 UTC).
pub const WATERING_SLOT: usize = 14;

const MOISTURE_LOW: f64 = 22.0;
const MOISTURE_AMP: f64 = 24.0;
const MOISTURE_SCALE: f64 = 30.0;
const BASE_DRAIN_RATE: f64 = 0.09;
const EC_BASE: f64 = 900.0;
const EC_DRY_GAIN: f64 = 0.35;
const EC_SCALE: f64 = 1000.0;
const SALT_PULSE_SLOTS: f64 = 8.0;
const PRR_PULSE_SLOTS: f64 = 1.5;

const SPECTRAL_NOISE: f64 = 0.004;
const SPECTRAL_GAIN_SD: f64 = 0.05;
const SPECTRAL_OFFSET_SD: f64 = 0.015;
const SPECTRAL_TILT_SD: f64 = 0.01;
/// First wavelength of the band carrying the spectral signature.
const SIGNATURE_BAND_START_NM: f64 = 380.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_plants_per_cell: usize,
    pub rootstocks: Vec<Rootstock>,
    pub start_date: NaiveDate,
    /// Exclusive.
    pub end_date: NaiveDate,
    /// µS/cm added to salinity-bearing treatments.
    pub salinity_ec_shift: f64,
    /// Post-watering salt pulse, relative to the EC daily amplitude.
    pub salinity_skew_shift: f64,
    /// Sharp post-watering EC pulse for PRR-bearing treatments.
    pub prr_kurtosis_shift: f64,
    /// Multiplier on the moisture drain rate for PRR-bearing treatments.
    pub prr_moisture_decay_factor: f64,
    pub rootstock_attenuation: BTreeMap<Rootstock, f64>,
    /// Reading noise, relative to each channel's nominal scale.
    pub noise_sigma: f64,
    pub missing_rate: f64,
    /// Log-scale spread of per-day drain rate and watering volume.
    pub day_jitter: f64,
    /// Days over which treatment effects grow linearly to full size; 0 = always full.
    pub ramp_days: u32,
    /// Days between spectrometer sessions.
    pub spectral_interval_days: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut rootstock_attenuation = BTreeMap::new();
        rootstock_attenuation.insert(Rootstock::Thomas, 1.0);
        rootstock_attenuation.insert(Rootstock::PP40, 0.5);
        rootstock_attenuation.insert(Rootstock::PP45, 0.05);
        Self {
            n_plants_per_cell: 6,
            rootstocks: Rootstock::ALL.to_vec(),
            start_date: NaiveDate::from_ymd_opt(2023, 12, 20).expect("valid date"),
            end_date: NaiveDate::from_ymd_opt(2024, 4, 30).expect("valid date"),
            salinity_ec_shift: 500.0,
            salinity_skew_shift: 0.3,
            prr_kurtosis_shift: 0.3,
            prr_moisture_decay_factor: 0.55,
            rootstock_attenuation,
            noise_sigma: 0.02,
            missing_rate: 0.02,
            day_jitter: 0.15,
            ramp_days: 0,
            spectral_interval_days: 7,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Single-rootstock configuration.
    pub fn for_rootstock(rootstock: Rootstock, seed: u64) -> Self {
        Self {
            rootstocks: vec![rootstock],
            seed,
            ..Self::default()
        }
    }

    /// Same generator with every treatment effect switched off.
    pub fn without_effects(mut self) -> Self {
        self.salinity_ec_shift = 0.0;
        self.salinity_skew_shift = 0.0;
        self.prr_kurtosis_shift = 0.0;
        self.prr_moisture_decay_factor = 1.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.end_date <= self.start_date {
            return bad("end_date must be after start_date".into());
        }
        if self.n_plants_per_cell == 0 {
            return bad("n_plants_per_cell must be >= 1".into());
        }
        if self.rootstocks.is_empty() {
            return bad("at least one rootstock required".into());
        }
        if self.rootstocks.iter().collect::<HashSet<_>>().len() != self.rootstocks.len() {
            return bad("rootstocks must be unique".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate {} not in [0, 1)", self.missing_rate));
        }
        if !(self.prr_moisture_decay_factor > 0.0 && self.prr_moisture_decay_factor <= 1.0) {
            return bad(format!(
                "prr_moisture_decay_factor {} not in (0, 1]",
                self.prr_moisture_decay_factor
            ));
        }
        for (r, a) in &self.rootstock_attenuation {
            if !(0.0..=1.0).contains(a) {
                return bad(format!("attenuation for {r} = {a} not in [0, 1]"));
            }
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("day_jitter", self.day_jitter),
            ("salinity_ec_shift", self.salinity_ec_shift.abs()),
            ("salinity_skew_shift", self.salinity_skew_shift.abs()),
            ("prr_kurtosis_shift", self.prr_kurtosis_shift.abs()),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if self.spectral_interval_days == 0 {
            return bad("spectral_interval_days must be >= 1".into());
        }
        Ok(())
    }

    pub fn attenuation(&self, r: Rootstock) -> f64 {
        self.rootstock_attenuation.get(&r).copied().unwrap_or(1.0)
    }

    pub fn n_days(&self) -> i64 {
        (self.end_date - self.start_date).num_days()
    }

    /// Effect multiplier on day `day` (0-based from `start_date`).
    pub fn ramp(&self, day: i64) -> f64 {
        if self.ramp_days == 0 {
            1.0
        } else {
            ((day + 1) as f64 / self.ramp_days as f64).min(1.0)
        }
    }

    /// Plants in generation order: rootstock, then treatment, then replicate.
    pub fn plants(&self) -> Vec<PlantMeta> {
        let per_rootstock = self.n_plants_per_cell * Treatment::ALL.len();
        let width = if per_rootstock >= 100 { 3 } else { 2 };
        let mut out = Vec::new();
        for &rootstock in &self.rootstocks {
            let mut num = 1;
            for treatment in Treatment::ALL {
                for _ in 0..self.n_plants_per_cell {
                    out.push(PlantMeta {
                        plant_id: format!("{}-{:0width$}", rootstock.id_prefix(), num),
                        rootstock,
                        treatment,
                    });
                    num += 1;
                }
            }
        }
        out
    }

    /// Spectrometer session dates.
    pub fn session_dates(&self) -> Vec<NaiveDate> {
        let step = i64::from(self.spectral_interval_days);
        (0..self.n_days())
            .step_by(step as usize)
            .map(|d| self.start_date + Duration::days(d))
            .collect()
    }
}

fn epoch_seconds(d: NaiveDate) -> i64 {
    d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp()
}

fn gauss(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates half-hourly soil readings for every plant of `cfg`.
///
/// Readings are sorted by `(plant_id, timestamp)`.
pub fn gen_soil(cfg: &SynthConfig) -> Result<(Vec<SoilReading>, Vec<PlantMeta>)> {
    cfg.validate()?;
    let mut metas = cfg.plants();
    metas.sort_by(|a, b| a.plant_id.cmp(&b.plant_id));
    let start = epoch_seconds(cfg.start_date);
    let n_slots = cfg.n_days() as usize * SLOTS_PER_DAY;
    let mut readings = Vec::with_capacity(metas.len() * n_slots);
    for meta in &metas {
        gen_plant_soil(cfg, meta, start, n_slots, &mut readings);
    }
    Ok((readings, metas))
}

fn gen_plant_soil(cfg: &SynthConfig, meta: &PlantMeta, start: i64, n_slots: usize, out: &mut Vec<SoilReading>) {
    let mut rng = rng::named_stream(cfg.seed, &format!("soil:{}", meta.plant_id));
    let att = cfg.attenuation(meta.rootstock);
    let t = meta.treatment;

    let plant_ec = 1.0 + 0.06 * gauss(&mut rng);
    let plant_low = MOISTURE_LOW * (1.0 + 0.05 * gauss(&mut rng));
    let plant_rate = (0.08 * gauss(&mut rng)).exp();

    let moist_noise = cfg.noise_sigma * MOISTURE_SCALE;
    let ec_noise = cfg.noise_sigma * EC_SCALE;
    // Cycles start at a watering; slot 0 sits inside the cycle begun the day before.
    let n_cycles = n_slots / SLOTS_PER_DAY + 2;
    let cycles: Vec<(f64, f64, f64)> = (0..n_cycles)
        .map(|_| {
            let rate = (cfg.day_jitter * gauss(&mut rng)).exp();
            let volume = (0.5 * cfg.day_jitter * gauss(&mut rng)).exp();
            let ec_day = (0.3 * cfg.day_jitter * gauss(&mut rng)).exp();
            (rate, volume, ec_day)
        })
        .collect();

    for slot in 0..n_slots {
        let shifted = slot + SLOTS_PER_DAY - WATERING_SLOT;
        let cycle = shifted / SLOTS_PER_DAY;
        let since = (shifted % SLOTS_PER_DAY) as f64;
        let day = (slot / SLOTS_PER_DAY) as i64;
        let effect = att * cfg.ramp(day);
        let (rate_j, volume_j, ec_j) = cycles[cycle];

        let mut rate = BASE_DRAIN_RATE * plant_rate * rate_j;
        if t.has_prr() {
            rate *= 1.0 - effect * (1.0 - cfg.prr_moisture_decay_factor);
        }
        let wet = (-rate * since).exp();
        let moisture = plant_low + MOISTURE_AMP * volume_j * wet;

        let ec_amp = EC_BASE * EC_DRY_GAIN;
        let mut ec = EC_BASE * plant_ec * ec_j * (1.0 + EC_DRY_GAIN * (1.0 - wet));
        if t.has_salinity() {
            ec += effect * cfg.salinity_ec_shift;
            ec += effect * cfg.salinity_skew_shift * ec_amp * (-since / SALT_PULSE_SLOTS).exp();
        }
        if t.has_prr() {
            ec += effect * cfg.prr_kurtosis_shift * ec_amp * (-since / PRR_PULSE_SLOTS).exp();
        }

        let moisture = (moisture + moist_noise * gauss(&mut rng)).clamp(0.0, 100.0);
        let ec = (ec + ec_noise * gauss(&mut rng)).max(0.0);
        let keep = rng.random::<f64>() >= cfg.missing_rate;
        if keep {
            out.push(SoilReading {
                timestamp: start + slot as i64 * GRID_STEP_SECS,
                plant_id: meta.plant_id.clone(),
                moisture,
                ec,
            });
        }
    }
}

/// Noise-free reference spectrum.
pub fn base_spectrum() -> Vec<f64> {
    WavelengthGrid::wavelengths()
        .into_iter()
        .map(|l| {
            let green = 0.08 * (-((l - 550.0) / 35.0).powi(2)).exp();
            let red_dip = 0.02 * (-((l - 670.0) / 20.0).powi(2)).exp();
            let red_edge = 0.43 / (1.0 + (-(l - 715.0) / 12.0).exp());
            0.05 + green - red_dip + red_edge
        })
        .collect()
}

/// Channels carrying the planted signature.
pub fn signature_band(n_signal_channels: usize) -> std::ops::Range<usize> {
    let start = channel_of(SIGNATURE_BAND_START_NM)
        .expect("band start on grid")
        .min(SPECTRAL_CHANNELS - n_signal_channels);
    start..start + n_signal_channels
}

/// Per-channel signature of treatment `t`, in reflectance units.
///
/// Salinity lifts the whole band; PRR adds an alternating half-size pattern.
pub fn signature(t: Treatment, amplitude: f64, n_signal_channels: usize) -> Vec<f64> {
    let mut sig = vec![0.0; SPECTRAL_CHANNELS];
    for (k, ch) in signature_band(n_signal_channels).enumerate() {
        let mut v = 0.0;
        if t.has_salinity() {
            v += 1.0;
        }
        if t.has_prr() {
            v += if k % 2 == 0 { 0.5 } else { -0.5 };
        }
        sig[ch] = amplitude * SPECTRAL_NOISE * v;
    }
    sig
}

/// Default number of channels carrying the spectral signature.
pub const DEFAULT_SIGNAL_CHANNELS: usize = 120;
/// Default signature amplitude, in units of the per-channel sensor noise.
pub const DEFAULT_SPECTRAL_AMPLITUDE: f64 = 1.3;

/// One spectrum per plant per session date, sorted by (plant_id, date).
pub fn gen_spectral(cfg: &SynthConfig, amplitude: f64, n_signal_channels: usize) -> Result<Vec<SpectralSample>> {
    cfg.validate()?;
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(Error::Config(format!("amplitude {amplitude} must be finite and >= 0")));
    }
    if !(1..=SPECTRAL_CHANNELS).contains(&n_signal_channels) {
        return Err(Error::Config(format!(
            "n_signal_channels {n_signal_channels} not in 1..={SPECTRAL_CHANNELS}"
        )));
    }
    let base = base_spectrum();
    let lambdas = WavelengthGrid::wavelengths();
    let sessions = cfg.session_dates();
    let mut metas = cfg.plants();
    metas.sort_by(|a, b| a.plant_id.cmp(&b.plant_id));

    let mut per_plant: Vec<Vec<SpectralSample>> = Vec::with_capacity(metas.len());
    for meta in &metas {
        let mut rng = rng::named_stream(cfg.seed, &format!("spectral:{}", meta.plant_id));
        let sig = signature(meta.treatment, amplitude, n_signal_channels);
        let gain = Normal::new(1.0, SPECTRAL_GAIN_SD).expect("valid sd");
        let mut samples = Vec::with_capacity(sessions.len());
        for &date in &sessions {
            let day = (date - cfg.start_date).num_days();
            let ramp = cfg.ramp(day);
            let g = gain.sample(&mut rng);
            let offset = SPECTRAL_OFFSET_SD * gauss(&mut rng);
            let tilt = SPECTRAL_TILT_SD * gauss(&mut rng);
            let reflectance: Vec<f64> = (0..SPECTRAL_CHANNELS)
                .map(|ch| {
                    let slope = (lambdas[ch] - 595.0) / 255.0;
                    let clean = base[ch] + ramp * sig[ch];
                    let r = g * clean + offset + tilt * slope + SPECTRAL_NOISE * gauss(&mut rng);
                    r.max(0.0)
                })
                .collect();
            samples.push(SpectralSample {
                plant_id: meta.plant_id.clone(),
                session_date: date,
                leaf_id: 1,
                reflectance,
            });
        }
        per_plant.push(samples);
    }
    let mut out: Vec<SpectralSample> = per_plant.into_iter().flatten().collect();
    crate::ingest::sort_spectra(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_plants_per_cell: 2,
            rootstocks: vec![Rootstock::Thomas],
            end_date: NaiveDate::from_ymd_opt(2023, 12, 30).unwrap(),
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (a, ma) = gen_soil(&small()).unwrap();
        let (b, mb) = gen_soil(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        let mut other = small();
        other.seed = 12;
        assert_ne!(gen_soil(&other).unwrap().0, a);
    }

    #[test]
    fn missing_rate_matches_binomial_count() {
        let mut cfg = small();
        cfg.missing_rate = 0.2;
        let (readings, metas) = gen_soil(&cfg).unwrap();
        let grid = metas.len() as f64 * cfg.n_days() as f64 * SLOTS_PER_DAY as f64;
        let expect = 0.8 * grid;
        let sd = (grid * 0.2 * 0.8).sqrt();
        assert!((readings.len() as f64 - expect).abs() <= 3.0 * sd, "{} vs {expect}", readings.len());
    }

    #[test]
    fn physical_ranges_hold() {
        let mut cfg = small();
        cfg.noise_sigma = 2.0;
        let (readings, _) = gen_soil(&cfg).unwrap();
        assert!(readings.iter().all(|r| (0.0..=100.0).contains(&r.moisture) && r.ec >= 0.0));
        assert!(readings.windows(2).all(|w| (&w[0].plant_id, w[0].timestamp) < (&w[1].plant_id, w[1].timestamp)));
    }

    #[test]
    fn zero_effects_make_groups_exchangeable() {
        // With effects off the treatment never enters the generative path:
        // the same plant stream yields identical readings under any label.
        let cfg = small().without_effects();
        let start = epoch_seconds(cfg.start_date);
        let n_slots = cfg.n_days() as usize * SLOTS_PER_DAY;
        let mut runs = Vec::new();
        for treatment in Treatment::ALL {
            let meta = PlantMeta {
                plant_id: "T-01".into(),
                rootstock: Rootstock::Thomas,
                treatment,
            };
            let mut out = Vec::new();
            gen_plant_soil(&cfg, &meta, start, n_slots, &mut out);
            runs.push(out);
        }
        assert!(runs.windows(2).all(|w| w[0] == w[1]));
        for t in Treatment::ALL {
            assert!(signature(t, 0.0, 120).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small();
        cfg.missing_rate = 1.0;
        assert!(matches!(gen_soil(&cfg), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.end_date = cfg.start_date;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.prr_moisture_decay_factor = 0.0;
        assert!(cfg.validate().is_err());
        assert!(gen_spectral(&small(), -1.0, 10).is_err());
        assert!(gen_spectral(&small(), 1.0, 0).is_err());
        assert!(gen_spectral(&small(), 1.0, 289).is_err());
    }

    #[test]
    fn spectra_have_full_grid() {
        let s = gen_spectral(&small(), 1.0, 120).unwrap();
        assert_eq!(s.len(), 8 * small().session_dates().len());
        assert!(s.iter().all(|x| x.reflectance.len() == SPECTRAL_CHANNELS && x.reflectance.iter().all(|r| *r >= 0.0)));
        assert_eq!(signature_band(120).len(), 120);
        assert_eq!(signature_band(288), 0..288);
    }
}
