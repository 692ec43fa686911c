//! Run configuration: one TOML file with a section per pipeline stage.

use std::path::{Path, PathBuf};

use agrisense::domain::Treatment;
use agrisense::features::FeatureSetId;
use agrisense::ingest::RangeSpec;
use agrisense::learn::{HierarchicalConfig, Level2Kind};
use agrisense::preprocess::PreprocessConfig;
use agrisense::spectral::AnovaMode;
use agrisense::synth::{SynthConfig, DEFAULT_SIGNAL_CHANNELS, DEFAULT_SPECTRAL_AMPLITUDE};
use agrisense::{Error, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Top-level seed; overrides every per-section seed.
    pub seed: u64,
    pub threads: usize,
    pub paths: Paths,
    pub synth: SynthSection,
    pub ingest: RangeSpec,
    pub preprocess: PreprocessConfig,
    pub features: FeaturesSection,
    pub model: ModelSection,
    pub eval: EvalSection,
    pub permtest: PermtestSection,
    pub spectral: SpectralSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            paths: Paths::default(),
            synth: SynthSection::default(),
            ingest: RangeSpec::default(),
            preprocess: PreprocessConfig::default(),
            features: FeaturesSection::default(),
            model: ModelSection::default(),
            eval: EvalSection::default(),
            permtest: PermtestSection::default(),
            spectral: SpectralSection::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub soil: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub spectral: Option<PathBuf>,
    pub windows: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    pub reports: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            soil: None,
            labels: None,
            spectral: None,
            windows: None,
            models: Vec::new(),
            reports: None,
            out: PathBuf::from("out"),
        }
    }
}

// `flatten` cannot be combined with `deny_unknown_fields`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    #[serde(flatten)]
    pub config: SynthConfig,
    pub spectral_amplitude: f64,
    pub signal_channels: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            config: SynthConfig::default(),
            spectral_amplitude: DEFAULT_SPECTRAL_AMPLITUDE,
            signal_channels: DEFAULT_SIGNAL_CHANNELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub set: FeatureSetId,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self { set: FeatureSetId::F2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    /// Train a single-level 4-class model of this kind instead of the
    /// hierarchical one.
    pub flat: Option<Level2Kind>,
    #[serde(flatten)]
    pub hierarchical: HierarchicalConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            flat: None,
            hierarchical: HierarchicalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub mask_fraction: f64,
    pub noise_sigma: f64,
    /// Boundaries of the stability periods; empty disables the breakdown.
    pub periods: Vec<NaiveDate>,
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            train_start: date(2023, 12, 20),
            train_end: date(2024, 3, 20),
            test_start: date(2024, 3, 20),
            test_end: date(2024, 4, 30),
            mask_fraction: 0.0,
            noise_sigma: 0.0,
            periods: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermtestSection {
    pub folds: usize,
    pub n_perm: usize,
}

impl Default for PermtestSection {
    fn default() -> Self {
        Self { folds: 5, n_perm: 1000 }
    }
}

/// Spectral sample selection, shared by `permtest` and `spectral-index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    /// Treatments compared; two or more.
    pub groups: Vec<Treatment>,
    /// Spectrometer session to analyse; unset uses the first one.
    pub session: Option<NaiveDate>,
    pub anova: AnovaMode,
    pub pca_components: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self {
            groups: vec![Treatment::Control, Treatment::Salinity],
            session: None,
            anova: AnovaMode::default(),
            pca_components: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            repeats: agrisense::bench::DEFAULT_REPEATS,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Pushes the top-level seed and thread count into every section.
    pub fn propagate(&mut self) {
        self.synth.config.seed = self.seed;
        self.model.hierarchical.seed = self.seed;
        self.model.hierarchical.threads = self.threads;
        self.model.hierarchical.features = self.features.set;
        if let AnovaMode::Permutation { seed, .. } = &mut self.spectral.anova {
            *seed = self.seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        self.synth.config.validate()?;
        self.ingest.validate()?;
        self.preprocess.validate()?;
        if self.eval.train_start >= self.eval.train_end || self.eval.test_start >= self.eval.test_end {
            return Err(Error::Config("eval periods must be non-empty".into()));
        }
        let mut groups = self.spectral.groups.clone();
        groups.sort_by_key(|t| t.index());
        groups.dedup();
        if groups.len() != self.spectral.groups.len() || groups.len() < 2 {
            return Err(Error::Config("spectral groups must be at least two distinct treatments".into()));
        }
        if self.permtest.folds < 2 || self.permtest.n_perm == 0 {
            return Err(Error::Config("permtest needs folds >= 2 and n_perm >= 1".into()));
        }
        if self.spectral.pca_components == 0 {
            return Err(Error::Config("pca_components must be >= 1".into()));
        }
        if self.eval.periods.windows(2).any(|w| w[0] >= w[1]) || self.eval.periods.len() == 1 {
            return Err(Error::Config("eval periods must be two or more increasing dates".into()));
        }
        if self.bench.repeats == 0 {
            return Err(Error::Config("bench repeats must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn defaults_match_module_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.synth.config, SynthConfig::default());
        assert_eq!(c.preprocess, PreprocessConfig::default());
        assert_eq!(c.model.hierarchical, HierarchicalConfig::default());
        assert_eq!(c.ingest, RangeSpec::default());
        assert_eq!(c.spectral.anova, AnovaMode::default());
        assert_eq!(c.bench.repeats, agrisense::bench::DEFAULT_REPEATS);
    }

    #[test]
    fn partial_file_and_unknown_keys() {
        let c = RunConfig::parse("seed = 7\n[model]\nlevel2 = \"knn\"\n[model.forest]\nn_trees = 10\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.hierarchical.level2, Level2Kind::Knn);
        assert_eq!(c.model.hierarchical.forest.n_trees, 10);
        assert!(matches!(RunConfig::parse("sede = 7\n"), Err(Error::Config(_))));
    }
}
