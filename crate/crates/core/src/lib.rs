//! Sensor-analysis pipeline for early detection of salinity and root-rot
//! stress in avocado: ingestion, preprocessing, moment features, spectral
//! statistics, classifiers, evaluation and benchmarking.

pub mod bench;
pub mod domain;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod learn;
pub mod linalg;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations of the generic models.
pub type Pca = spectral::PcaModel<f64>;
pub type Forest = learn::ForestModel<f64>;
pub type Knn = learn::KnnModel<f64>;
pub type Linear = learn::LinearModel<f64>;
pub type ResNet1d = learn::ResNet1dModel<f64>;
pub type Hierarchical = learn::HierarchicalModel<f64>;
pub type Flat = learn::FlatModel<f64>;
pub type Moments = features::Moments<f64>;
