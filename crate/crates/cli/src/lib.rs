//! Command-line front end: argument parsing, flag overrides and manifests.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use agrisense::domain::{Rootstock, Treatment};
use agrisense::features::FeatureSetId;
use agrisense::learn::{Level1Kind, Level2Kind};
use agrisense::spectral::AnovaMode;
use agrisense::{Error, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::RunConfig;
use crate::manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "agrisense", version, about = "Soil-sensor stress classification pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Top-level seed for every random stream
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages (results do not depend on it)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory for artifacts and the manifest
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// More log output on stderr (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic soil, label and spectral CSVs
    Synth(SynthArgs),
    /// Validate, deduplicate and range-filter a soil CSV
    Ingest(SoilArgs),
    /// Turn a soil CSV into smoothed daily windows
    Preprocess(PreprocessArgs),
    /// Compute statistical moment features per window
    Features(FeaturesArgs),
    /// Fit a hierarchical (or flat) model on the training period
    Train(TrainArgs),
    /// Evaluate a model on the test period
    Evaluate(EvaluateArgs),
    /// Multivariate SVM permutation test on spectra
    Permtest(PermtestArgs),
    /// Spectral indices, per-index ANOVA, wavelength scan and PCA
    SpectralIndex(SpectralIndexArgs),
    /// Benchmark inference of one or more models
    Bench(BenchArgs),
    /// Summarize the JSON reports of a directory
    Report(ReportArgs),
    /// Re-run a command from its manifest
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Ingest(_) => "ingest",
            Command::Preprocess(_) => "preprocess",
            Command::Features(_) => "features",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Permtest(_) => "permtest",
            Command::SpectralIndex(_) => "spectral-index",
            Command::Bench(_) => "bench",
            Command::Report(_) => "report",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Rootstocks to simulate (repeatable)
    #[arg(long = "rootstock", value_name = "NAME")]
    pub rootstocks: Vec<Rootstock>,
    /// Plants per rootstock × treatment cell
    #[arg(long)]
    pub plants_per_cell: Option<usize>,
    /// First simulated day
    #[arg(long, value_name = "DATE")]
    pub start: Option<NaiveDate>,
    /// Day after the last simulated day
    #[arg(long, value_name = "DATE")]
    pub end: Option<NaiveDate>,
    /// Fraction of readings dropped at random
    #[arg(long)]
    pub missing_rate: Option<f64>,
    /// Reading noise relative to each channel's scale
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Days over which treatment effects ramp up
    #[arg(long)]
    pub ramp_days: Option<u32>,
    /// Amplitude of the distributed spectral signature
    #[arg(long)]
    pub spectral_amplitude: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SoilArgs {
    /// Soil readings CSV
    #[arg(long, value_name = "FILE")]
    pub soil: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub soil: SoilArgs,
    /// Moving-average window, in slots
    #[arg(long)]
    pub smoothing_window: Option<usize>,
    /// Maximum fraction of missing slots before a day is dropped
    #[arg(long)]
    pub max_missing_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Daily windows CSV
    #[arg(long, value_name = "FILE")]
    pub windows: Option<PathBuf>,
    /// Feature set: f2 (skewness, kurtosis) or f4 (plus mean, std)
    #[arg(long = "features", value_name = "SET")]
    pub set: Option<FeatureSetId>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub features: FeaturesArgs,
    /// Plant labels CSV
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Level-1 pair classifier: resnet or logistic
    #[arg(long)]
    pub level1: Option<Level1Kind>,
    /// Level-2 treatment classifier: forest, knn or svm
    #[arg(long)]
    pub level2: Option<Level2Kind>,
    /// Train a flat 4-class model of this kind instead
    #[arg(long, value_name = "KIND")]
    pub flat: Option<Level2Kind>,
    /// ResNet training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Trees per random forest
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// First day of the training period
    #[arg(long, value_name = "DATE")]
    pub train_start: Option<NaiveDate>,
    /// Day after the training period
    #[arg(long, value_name = "DATE")]
    pub train_end: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Trained model JSON
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Daily windows CSV
    #[arg(long, value_name = "FILE")]
    pub windows: Option<PathBuf>,
    /// Plant labels CSV
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Soil CSV; required with --mask-fraction
    #[arg(long, value_name = "FILE")]
    pub soil: Option<PathBuf>,
    /// Fraction of raw readings removed before preprocessing
    #[arg(long)]
    pub mask_fraction: Option<f64>,
    /// Gaussian noise on standardized model inputs
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// First day of the test period
    #[arg(long, value_name = "DATE")]
    pub test_start: Option<NaiveDate>,
    /// Day after the test period
    #[arg(long, value_name = "DATE")]
    pub test_end: Option<NaiveDate>,
    /// Period boundaries for the stability breakdown, comma separated
    #[arg(long, value_delimiter = ',', value_name = "DATES")]
    pub periods: Vec<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    /// Spectral samples CSV
    #[arg(long, value_name = "FILE")]
    pub spectral: Option<PathBuf>,
    /// Plant labels CSV
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Treatments to compare, comma separated
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<Treatment>,
    /// Spectrometer session date (default: first session)
    #[arg(long, value_name = "DATE")]
    pub session: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct PermtestArgs {
    #[command(flatten)]
    pub spectra: SpectraArgs,
    /// Cross-validation folds
    #[arg(long)]
    pub folds: Option<usize>,
    /// Label permutations
    #[arg(long)]
    pub n_perm: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SpectralIndexArgs {
    #[command(flatten)]
    pub spectra: SpectraArgs,
    /// Label shuffles for the permutation ANOVA p-values (default 2000)
    #[arg(long, value_name = "N", conflicts_with = "anova_analytic")]
    pub anova_permutations: Option<usize>,
    /// ANOVA p-values from the F distribution
    #[arg(long)]
    pub anova_analytic: bool,
    /// Principal components kept
    #[arg(long)]
    pub pca_components: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model JSON to benchmark (repeatable)
    #[arg(long = "model", value_name = "FILE")]
    pub models: Vec<PathBuf>,
    /// Daily windows CSV
    #[arg(long, value_name = "FILE")]
    pub windows: Option<PathBuf>,
    /// Timed repetitions after one warm-up pass
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of JSON reports (default: the output directory)
    #[arg(long, value_name = "DIR")]
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run
    pub manifest: PathBuf,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn apply_spectra(cfg: &mut RunConfig, a: SpectraArgs) {
    set_opt(&mut cfg.paths.spectral, a.spectral);
    set_opt(&mut cfg.paths.labels, a.labels);
    if !a.groups.is_empty() {
        cfg.spectral.groups = a.groups;
    }
    set_opt(&mut cfg.spectral.session, a.session);
}

/// Layers flags over the configuration file.
pub fn apply(cfg: &mut RunConfig, global: GlobalArgs, command: Command) {
    set(&mut cfg.seed, global.seed);
    set(&mut cfg.threads, global.threads);
    set(&mut cfg.paths.out, global.out);
    match command {
        Command::Synth(a) => {
            let s = &mut cfg.synth;
            if !a.rootstocks.is_empty() {
                s.config.rootstocks = a.rootstocks;
            }
            set(&mut s.config.n_plants_per_cell, a.plants_per_cell);
            set(&mut s.config.start_date, a.start);
            set(&mut s.config.end_date, a.end);
            set(&mut s.config.missing_rate, a.missing_rate);
            set(&mut s.config.noise_sigma, a.noise_sigma);
            set(&mut s.config.ramp_days, a.ramp_days);
            set(&mut s.spectral_amplitude, a.spectral_amplitude);
        }
        Command::Ingest(a) => set_opt(&mut cfg.paths.soil, a.soil),
        Command::Preprocess(a) => {
            set_opt(&mut cfg.paths.soil, a.soil.soil);
            set(&mut cfg.preprocess.smoothing_window, a.smoothing_window);
            set(&mut cfg.preprocess.max_missing_fraction_per_day, a.max_missing_fraction);
        }
        Command::Features(a) => {
            set_opt(&mut cfg.paths.windows, a.windows);
            set(&mut cfg.features.set, a.set);
        }
        Command::Train(a) => {
            set_opt(&mut cfg.paths.windows, a.features.windows);
            set(&mut cfg.features.set, a.features.set);
            set_opt(&mut cfg.paths.labels, a.labels);
            let h = &mut cfg.model.hierarchical;
            set(&mut h.level1, a.level1);
            set(&mut h.level2, a.level2);
            set(&mut h.resnet.epochs, a.epochs);
            set(&mut h.forest.n_trees, a.n_trees);
            set_opt(&mut cfg.model.flat, a.flat);
            set(&mut cfg.eval.train_start, a.train_start);
            set(&mut cfg.eval.train_end, a.train_end);
        }
        Command::Evaluate(a) => {
            if let Some(m) = a.model {
                cfg.paths.models = vec![m];
            }
            set_opt(&mut cfg.paths.windows, a.windows);
            set_opt(&mut cfg.paths.labels, a.labels);
            set_opt(&mut cfg.paths.soil, a.soil);
            let e = &mut cfg.eval;
            set(&mut e.mask_fraction, a.mask_fraction);
            set(&mut e.noise_sigma, a.noise_sigma);
            set(&mut e.test_start, a.test_start);
            set(&mut e.test_end, a.test_end);
            if !a.periods.is_empty() {
                e.periods = a.periods;
            }
        }
        Command::Permtest(a) => {
            apply_spectra(cfg, a.spectra);
            set(&mut cfg.permtest.folds, a.folds);
            set(&mut cfg.permtest.n_perm, a.n_perm);
        }
        Command::SpectralIndex(a) => {
            apply_spectra(cfg, a.spectra);
            if let Some(n_perm) = a.anova_permutations {
                cfg.spectral.anova = AnovaMode::Permutation { n_perm, seed: 0 };
            }
            if a.anova_analytic {
                cfg.spectral.anova = AnovaMode::Analytic;
            }
            set(&mut cfg.spectral.pca_components, a.pca_components);
        }
        Command::Bench(a) => {
            if !a.models.is_empty() {
                cfg.paths.models = a.models;
            }
            set_opt(&mut cfg.paths.windows, a.windows);
            set(&mut cfg.bench.repeats, a.repeats);
        }
        Command::Report(a) => set_opt(&mut cfg.paths.reports, a.reports),
        Command::Replay(_) => {}
    }
    cfg.propagate();
}

/// Runs `command` with a fully resolved configuration and writes its
/// manifest. Returns the manifest path.
pub fn execute(command: &str, cfg: &RunConfig, argv: Vec<String>) -> Result<PathBuf> {
    cfg.validate()?;
    let mut ctx = Ctx::new(&cfg.paths.out)?;
    match command {
        "synth" => commands::synth(cfg, &mut ctx)?,
        "ingest" => commands::ingest(cfg, &mut ctx)?,
        "preprocess" => commands::preprocess_cmd(cfg, &mut ctx)?,
        "features" => commands::features(cfg, &mut ctx)?,
        "train" => commands::train(cfg, &mut ctx)?,
        "evaluate" => commands::evaluate(cfg, &mut ctx)?,
        "permtest" => commands::permtest(cfg, &mut ctx)?,
        "spectral-index" => commands::spectral_index(cfg, &mut ctx)?,
        "bench" => commands::bench(cfg, &mut ctx)?,
        "report" => commands::report(cfg, &mut ctx)?,
        other => return Err(Error::Config(format!("unknown command `{other}`"))),
    }
    let manifest = Manifest {
        command: command.to_string(),
        argv,
        seed: cfg.seed,
        config: cfg.clone(),
        inputs: ctx.inputs,
        outputs: ctx.outputs,
        versions: Manifest::versions(),
    };
    let path = cfg.paths.out.join(Manifest::file_name(command));
    std::fs::write(&path, manifest.to_json()?)?;
    Ok(path)
}

/// Entry point after argument parsing.
pub fn run(cli: Cli, argv: Vec<String>) -> Result<PathBuf> {
    if let Command::Replay(r) = &cli.command {
        let manifest = Manifest::load(&r.manifest)?;
        let mut cfg = manifest.config.clone();
        set(&mut cfg.paths.out, cli.global.out);
        for input in &manifest.inputs {
            let now = std::fs::read(&input.path)?;
            if manifest::FileHash::from_bytes(&input.path, &now) != *input {
                log::warn!("input {} changed since the recorded run", input.path.display());
            }
        }
        return execute(&manifest.command, &cfg, argv);
    }
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let name = cli.command.name();
    apply(&mut cfg, cli.global, cli.command);
    execute(name, &cfg, argv)
}

/// Exit status for an error category.
pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        "config" | "argument" => 2,
        "io" => 3,
        _ => 4,
    }
}
