//! Vocabulary types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-hourly soil readings per calendar day.
pub const SLOTS_PER_DAY: usize = 48;
/// Spacing of the soil sampling grid in seconds.
pub const GRID_STEP_SECS: i64 = 1800;
/// Channels captured by the handheld spectrometer.
pub const SPECTRAL_CHANNELS: usize = 288;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rootstock {
    Thomas,
    PP40,
    PP45,
}

impl Rootstock {
    pub const ALL: [Rootstock; 3] = [Rootstock::Thomas, Rootstock::PP40, Rootstock::PP45];

    pub fn as_str(self) -> &'static str {
        match self {
            Rootstock::Thomas => "thomas",
            Rootstock::PP40 => "pp40",
            Rootstock::PP45 => "pp45",
        }
    }

    /// Short prefix used for generated plant ids.
    pub fn id_prefix(self) -> &'static str {
        match self {
            Rootstock::Thomas => "T",
            Rootstock::PP40 => "P40",
            Rootstock::PP45 => "P45",
        }
    }
}

impl fmt::Display for Rootstock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rootstock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "thomas" => Ok(Rootstock::Thomas),
            "pp40" => Ok(Rootstock::PP40),
            "pp45" => Ok(Rootstock::PP45),
            other => Err(Error::Format(format!("unknown rootstock `{other}`"))),
        }
    }
}

/// Experimental treatment. The declaration order is the class index order
/// used by every flat 4-class model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    Control,
    Salinity,
    #[serde(rename = "prr")]
    PRR,
    #[serde(rename = "salinity_prr")]
    SalinityPRR,
}

impl Treatment {
    pub const ALL: [Treatment; 4] = [
        Treatment::Control,
        Treatment::Salinity,
        Treatment::PRR,
        Treatment::SalinityPRR,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Treatment> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Treatment::Control => "control",
            Treatment::Salinity => "salinity",
            Treatment::PRR => "prr",
            Treatment::SalinityPRR => "salinity_prr",
        }
    }

    pub fn has_salinity(self) -> bool {
        matches!(self, Treatment::Salinity | Treatment::SalinityPRR)
    }

    pub fn has_prr(self) -> bool {
        matches!(self, Treatment::PRR | Treatment::SalinityPRR)
    }

    /// Position of this treatment inside its pair (0 = without PRR, 1 = with PRR).
    pub fn index_in_pair(self) -> usize {
        usize::from(self.has_prr())
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Treatment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match norm.as_str() {
            "control" => Ok(Treatment::Control),
            "salinity" => Ok(Treatment::Salinity),
            "prr" => Ok(Treatment::PRR),
            "salinityprr" => Ok(Treatment::SalinityPRR),
            _ => Err(Error::Format(format!("unknown treatment `{}`", s.trim()))),
        }
    }
}

/// First-level grouping of the hierarchical classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairLabel {
    /// Control and PRR.
    PairA,
    /// Salinity and Salinity+PRR.
    PairB,
}

impl PairLabel {
    pub const ALL: [PairLabel; 2] = [PairLabel::PairA, PairLabel::PairB];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<PairLabel> {
        Self::ALL.get(i).copied()
    }

    /// Members ordered by [`Treatment::index_in_pair`].
    pub fn members(self) -> [Treatment; 2] {
        match self {
            PairLabel::PairA => [Treatment::Control, Treatment::PRR],
            PairLabel::PairB => [Treatment::Salinity, Treatment::SalinityPRR],
        }
    }

    pub fn contains(self, t: Treatment) -> bool {
        treatment_to_pair(t) == self
    }
}

impl fmt::Display for PairLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairLabel::PairA => "pair_a",
            PairLabel::PairB => "pair_b",
        })
    }
}

pub fn treatment_to_pair(t: Treatment) -> PairLabel {
    if t.has_salinity() {
        PairLabel::PairB
    } else {
        PairLabel::PairA
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantMeta {
    pub plant_id: String,
    pub rootstock: Rootstock,
    pub treatment: Treatment,
}

/// One soil sample. `moisture` in percent, `ec` in µS/cm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoilReading {
    /// UTC seconds since the epoch.
    pub timestamp: i64,
    pub plant_id: String,
    pub moisture: f64,
    pub ec: f64,
}

impl SoilReading {
    pub fn is_valid(&self) -> bool {
        self.timestamp > 0 && self.moisture.is_finite() && self.ec.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub plant_id: String,
    pub session_date: NaiveDate,
    pub leaf_id: u32,
    pub reflectance: Vec<f64>,
}

impl SpectralSample {
    pub fn new(
        plant_id: impl Into<String>,
        session_date: NaiveDate,
        leaf_id: u32,
        reflectance: Vec<f64>,
    ) -> Result<Self> {
        if reflectance.len() != SPECTRAL_CHANNELS {
            return Err(Error::domain(format!(
                "spectrum has {} channels, expected {SPECTRAL_CHANNELS}",
                reflectance.len()
            )));
        }
        if let Some(bad) = reflectance.iter().find(|r| !r.is_finite() || **r < 0.0) {
            return Err(Error::domain(format!("invalid reflectance value {bad}")));
        }
        Ok(Self {
            plant_id: plant_id.into(),
            session_date,
            leaf_id,
            reflectance,
        })
    }
}

/// Soil channel layout inside a [`DailyWindow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Moisture = 0,
    Ec = 1,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Moisture, Channel::Ec];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Moisture => "moisture",
            Channel::Ec => "ec",
        }
    }
}

/// A complete, smoothed day of soil data: 48 rows of (moisture, EC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyWindow {
    pub plant_id: String,
    pub date: NaiveDate,
    values: Vec<[f64; 2]>,
    pub degenerate_flags: [bool; 2],
}

impl DailyWindow {
    pub fn new(plant_id: impl Into<String>, date: NaiveDate, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != SLOTS_PER_DAY {
            return Err(Error::argument(format!(
                "daily window needs {SLOTS_PER_DAY} rows, got {}",
                values.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("daily window contains non-finite values"));
        }
        let mut degenerate_flags = [false; 2];
        for c in Channel::ALL {
            let first = values[0][c as usize];
            degenerate_flags[c as usize] = values.iter().all(|row| row[c as usize] == first);
        }
        Ok(Self {
            plant_id: plant_id.into(),
            date,
            values,
            degenerate_flags,
        })
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn channel(&self, c: Channel) -> Vec<f64> {
        self.values.iter().map(|row| row[c as usize]).collect()
    }
}

/// Chronological train/test split; both periods half-open `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_period: (NaiveDate, NaiveDate),
    pub test_period: (NaiveDate, NaiveDate),
}

impl SplitSpec {
    pub fn new(train_period: (NaiveDate, NaiveDate), test_period: (NaiveDate, NaiveDate)) -> Result<Self> {
        if train_period.0 >= train_period.1 || test_period.0 >= test_period.1 {
            return Err(Error::argument("split periods must be non-empty"));
        }
        if train_period.1 > test_period.0 {
            return Err(Error::argument("train period must end at or before the test period starts"));
        }
        Ok(Self {
            train_period,
            test_period,
        })
    }

    pub fn in_train(&self, d: NaiveDate) -> bool {
        self.train_period.0 <= d && d < self.train_period.1
    }

    pub fn in_test(&self, d: NaiveDate) -> bool {
        self.test_period.0 <= d && d < self.test_period.1
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "train [{}, {}) / test [{}, {})",
            self.train_period.0, self.train_period.1, self.test_period.0, self.test_period.1
        )
    }
}

/// Leaf electrical conductivity `L / (R2 · A)`.
///
/// With `l` in cm and `a` in cm² the result is in S/cm.
pub fn leaf_ec(r2: f64, l: f64, a: f64) -> Result<f64> {
    for (name, v) in [("r2", r2), ("l", l), ("a", a)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(l / (r2 * a))
}
