//! Two-level classifier: a pair model over raw windows, then one
//! within-pair model per pair over moment features.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::forest::{fit_forest, ForestHyper, ForestModel};
use super::knn::{fit_knn, KnnModel, DEFAULT_K};
use super::linear::{fit_logistic, fit_svm, LinearHyper, LinearModel};
use super::resnet::{fit_resnet1d, ResNet1dModel, ResNetHyper};
use super::{argmax, class_count, Classifier, Standardizer};
use crate::domain::{treatment_to_pair, DailyWindow, PairLabel, Treatment, SLOTS_PER_DAY};
use crate::error::{Error, Result};
use crate::features::{feature_vector, FeatureSetId};
use crate::rng;
use crate::scalar::Scalar;

/// Version of the serialized model container.
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MODEL_FORMAT: &str = "agrisense-hierarchical";
pub const FLAT_MODEL_FORMAT: &str = "agrisense-flat";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level1Kind {
    ResNet,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level2Kind {
    Forest,
    Knn,
    Svm,
}

macro_rules! kind_names {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $(<$t>::$v => $s),+ })
            }
        }

        impl std::str::FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok(<$t>::$v),)+
                    other => Err(Error::argument(format!("unknown model kind `{other}`"))),
                }
            }
        }
    };
}

kind_names!(Level1Kind, ResNet => "resnet", Logistic => "logistic");
kind_names!(Level2Kind, Forest => "forest", Knn => "knn", Svm => "svm");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchicalConfig {
    pub level1: Level1Kind,
    pub level2: Level2Kind,
    pub features: FeatureSetId,
    /// Seeds every sub-model; per-model seeds in the blocks below are ignored.
    pub seed: u64,
    pub threads: usize,
    pub resnet: ResNetHyper,
    pub logistic: LinearHyper,
    pub forest: ForestHyper,
    pub svm: LinearHyper,
    pub knn_k: usize,
}

impl Default for HierarchicalConfig {
    fn default() -> Self {
        Self {
            level1: Level1Kind::ResNet,
            level2: Level2Kind::Forest,
            features: FeatureSetId::F2,
            seed: 0,
            threads: 1,
            resnet: ResNetHyper::default(),
            logistic: LinearHyper::logistic(),
            forest: ForestHyper::default(),
            svm: LinearHyper::svm(),
            knn_k: DEFAULT_K,
        }
    }
}

impl HierarchicalConfig {
    pub fn descriptor(&self) -> String {
        format!("hierarchical({}+{},{})", self.level1, self.level2, self.features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureClassifier<T> {
    Forest(ForestModel<T>),
    Knn(KnnModel<T>),
    Svm(LinearModel<T>),
}

/// Standardized feature rows fed to a forest, KNN or linear SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel<T> {
    pub standardizer: Standardizer<T>,
    pub classifier: FeatureClassifier<T>,
}

impl<T: Scalar> FeatureModel<T> {
    pub fn fit(kind: Level2Kind, x: ArrayView2<'_, T>, y: &[usize], cfg: &HierarchicalConfig, label: &str) -> Result<Self> {
        let standardizer = Standardizer::fit(x);
        let z = standardizer.transform(x);
        let seed = rng::derive_seed(cfg.seed, label);
        let classifier = match kind {
            Level2Kind::Forest => {
                let h = ForestHyper { seed, ..cfg.forest };
                FeatureClassifier::Forest(fit_forest(z.view(), y, &h)?)
            }
            Level2Kind::Knn => FeatureClassifier::Knn(fit_knn(z.view(), y, cfg.knn_k.min(z.nrows()))?),
            Level2Kind::Svm => FeatureClassifier::Svm(fit_svm(z.view(), y, &cfg.svm.with_seed(seed))?),
        };
        Ok(Self { standardizer, classifier })
    }

    /// Prediction for a row that is already standardized.
    pub fn predict_standardized(&self, z: ArrayView1<'_, T>) -> usize {
        match &self.classifier {
            FeatureClassifier::Forest(m) => m.predict_one(z),
            FeatureClassifier::Knn(m) => m.predict_one(z),
            FeatureClassifier::Svm(m) => m.predict_one(z),
        }
    }
}

impl<T: Scalar> Classifier<T> for FeatureModel<T> {
    fn n_classes(&self) -> usize {
        match &self.classifier {
            FeatureClassifier::Forest(m) => m.n_classes(),
            FeatureClassifier::Knn(m) => m.n_classes(),
            FeatureClassifier::Svm(m) => m.n_classes(),
        }
    }

    fn predict_one(&self, x: ArrayView1<'_, T>) -> usize {
        self.predict_standardized(self.standardizer.transform_row(x).view())
    }
}

/// Single-level 4-class baseline over moment features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatModel<T> {
    pub kind: Level2Kind,
    pub features: FeatureSetId,
    pub model: FeatureModel<T>,
}

pub fn fit_flat<T: Scalar>(
    windows: &[DailyWindow],
    labels: &[Treatment],
    kind: Level2Kind,
    cfg: &HierarchicalConfig,
) -> Result<FlatModel<T>> {
    if windows.len() != labels.len() {
        return Err(Error::argument(format!("{} labels for {} windows", labels.len(), windows.len())));
    }
    let refs: Vec<&DailyWindow> = windows.iter().collect();
    let y: Vec<usize> = labels.iter().map(|t| t.index()).collect();
    class_count(&y, y.len())?;
    let x = feature_matrix::<T>(&refs, cfg.features);
    Ok(FlatModel {
        kind,
        features: cfg.features,
        model: FeatureModel::fit(kind, x.view(), &y, cfg, "flat")?,
    })
}

impl<T: Scalar> FlatModel<T> {
    pub fn predict(&self, windows: &[DailyWindow]) -> Vec<Treatment> {
        let refs: Vec<&DailyWindow> = windows.iter().collect();
        let x = feature_matrix::<T>(&refs, self.features);
        self.model
            .predict(x.view())
            .into_iter()
            .map(|c| Treatment::from_index(c).expect("4-class model"))
            .collect()
    }

    pub fn descriptor(&self) -> String {
        format!("flat({},{})", self.kind, self.features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PairModel<T> {
    ResNet(ResNet1dModel<T>),
    Logistic {
        standardizer: Standardizer<T>,
        model: LinearModel<T>,
    },
}

impl<T: Scalar> PairModel<T> {
    /// Standardized network input for one flattened window.
    fn standardize(&self, x: &[T]) -> Vec<T> {
        match self {
            PairModel::ResNet(m) => m.standardize(x),
            PairModel::Logistic { standardizer, .. } => standardizer.transform_row(ArrayView1::from(x)).to_vec(),
        }
    }

    fn predict_standardized(&self, z: &[T]) -> usize {
        match self {
            PairModel::ResNet(m) => argmax(&m.probabilities_standardized(z)),
            PairModel::Logistic { model, .. } => model.predict_one(ArrayView1::from(z)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchicalPrediction {
    pub pair: PairLabel,
    pub treatment: Treatment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalModel<T> {
    pub config: HierarchicalConfig,
    pub level1: PairModel<T>,
    /// Indexed by `PairLabel::index`; class indices follow `Treatment::index_in_pair`.
    pub level2: [FeatureModel<T>; 2],
}

/// Window as a channel-major `channels × 48` vector.
pub fn window_input<T: Scalar>(w: &DailyWindow) -> Vec<T> {
    let rows = w.rows();
    let mut out = Vec::with_capacity(2 * rows.len());
    for c in 0..2 {
        out.extend(rows.iter().map(|r| T::lit(r[c])));
    }
    out
}

fn window_tensor<T: Scalar>(windows: &[&DailyWindow]) -> Array3<T> {
    let mut x = Array3::zeros((windows.len(), 2, SLOTS_PER_DAY));
    for (i, w) in windows.iter().enumerate() {
        for (t, r) in w.rows().iter().enumerate() {
            x[[i, 0, t]] = T::lit(r[0]);
            x[[i, 1, t]] = T::lit(r[1]);
        }
    }
    x
}

/// Moment features of each window as a matrix.
pub fn feature_matrix<T: Scalar>(windows: &[&DailyWindow], set: FeatureSetId) -> Array2<T> {
    let mut x = Array2::zeros((windows.len(), set.dim()));
    for (i, w) in windows.iter().enumerate() {
        for (j, v) in feature_vector(w, set).values.iter().enumerate() {
            x[[i, j]] = T::lit(*v);
        }
    }
    x
}

/// Fits the pair model on every window and each within-pair model on the
/// windows whose true treatment belongs to that pair.
pub fn fit_hierarchical<T: Scalar>(
    windows: &[DailyWindow],
    labels: &[Treatment],
    cfg: &HierarchicalConfig,
) -> Result<HierarchicalModel<T>> {
    if windows.len() != labels.len() {
        return Err(Error::argument(format!("{} labels for {} windows", labels.len(), windows.len())));
    }
    for t in Treatment::ALL {
        if !labels.contains(&t) {
            return Err(Error::Fit(format!("treatment {t} absent from training data")));
        }
    }
    let refs: Vec<&DailyWindow> = windows.iter().collect();
    let pair_y: Vec<usize> = labels.iter().map(|t| treatment_to_pair(*t).index()).collect();
    let l1_seed = rng::derive_seed(cfg.seed, "level1");
    let level1 = match cfg.level1 {
        Level1Kind::ResNet => {
            let h = ResNetHyper {
                seed: l1_seed,
                threads: cfg.threads,
                ..cfg.resnet
            };
            PairModel::ResNet(fit_resnet1d(window_tensor::<T>(&refs).view(), &pair_y, &h)?)
        }
        Level1Kind::Logistic => {
            let flat = window_tensor::<T>(&refs)
                .into_shape_with_order((windows.len(), 2 * SLOTS_PER_DAY))
                .expect("contiguous tensor");
            let standardizer = Standardizer::fit(flat.view());
            let z = standardizer.transform(flat.view());
            let model = fit_logistic(z.view(), &pair_y, &cfg.logistic.with_seed(l1_seed))?;
            PairModel::Logistic { standardizer, model }
        }
    };
    let mut level2 = Vec::with_capacity(2);
    for pair in PairLabel::ALL {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| pair.contains(labels[i])).collect();
        let sub: Vec<&DailyWindow> = idx.iter().map(|&i| &windows[i]).collect();
        let y: Vec<usize> = idx.iter().map(|&i| labels[i].index_in_pair()).collect();
        class_count(&y, y.len())?;
        let x = feature_matrix::<T>(&sub, cfg.features);
        level2.push(FeatureModel::fit(cfg.level2, x.view(), &y, cfg, &format!("level2:{}", pair.index()))?);
    }
    let level2: [FeatureModel<T>; 2] = level2.try_into().map_err(|_| Error::Fit("level-2 models".into()))?;
    Ok(HierarchicalModel {
        config: cfg.clone(),
        level1,
        level2,
    })
}

impl<T: Scalar> HierarchicalModel<T> {
    pub fn predict_one(&self, w: &DailyWindow) -> HierarchicalPrediction {
        self.predict_one_noisy(w, 0.0, &mut rng::stream(0, 0))
    }

    /// Gaussian noise of standard deviation `sigma` is added to the
    /// standardized level-1 input and to the standardized level-2 features.
    fn predict_one_noisy(&self, w: &DailyWindow, sigma: f64, r: &mut rng::StreamRng) -> HierarchicalPrediction {
        let mut z = self.level1.standardize(&window_input::<T>(w));
        if sigma > 0.0 {
            z.iter_mut().for_each(|v| *v += T::lit(sigma * r.sample::<f64, _>(StandardNormal)));
        }
        let pair = PairLabel::from_index(self.level1.predict_standardized(&z)).expect("binary pair model");
        let m = &self.level2[pair.index()];
        let f: Vec<T> = feature_vector(w, self.config.features).values.iter().map(|v| T::lit(*v)).collect();
        let mut fz = m.standardizer.transform_row(ArrayView1::from(&f[..]));
        if sigma > 0.0 {
            fz.iter_mut().for_each(|v| *v += T::lit(sigma * r.sample::<f64, _>(StandardNormal)));
        }
        let treatment = pair.members()[m.predict_standardized(fz.view())];
        HierarchicalPrediction { pair, treatment }
    }

    pub fn predict(&self, windows: &[DailyWindow]) -> Vec<HierarchicalPrediction> {
        windows.iter().map(|w| self.predict_one(w)).collect()
    }

    /// Prediction under input noise; window `i` draws from its own stream,
    /// so the result does not depend on batch composition order.
    pub fn predict_noisy(&self, windows: &[DailyWindow], sigma: f64, seed: u64) -> Vec<HierarchicalPrediction> {
        windows
            .iter()
            .enumerate()
            .map(|(i, w)| self.predict_one_noisy(w, sigma, &mut rng::stream(seed, i as u64)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        to_container(MODEL_FORMAT, self.config.seed, self)
    }
}

#[derive(Serialize)]
struct Container<'a, M> {
    format: &'a str,
    version: u32,
    seed: u64,
    model: &'a M,
}

#[derive(Deserialize)]
struct OwnedContainer<M> {
    format: String,
    version: u32,
    model: M,
}

fn to_container<M: Serialize>(format: &str, seed: u64, model: &M) -> Result<String> {
    let c = Container {
        format,
        version: MODEL_FORMAT_VERSION,
        seed,
        model,
    };
    Ok(serde_json::to_string(&c)?)
}

fn from_container<M: serde::de::DeserializeOwned>(format: &str, s: &str) -> Result<M> {
    let c: OwnedContainer<M> = serde_json::from_str(s)?;
    if c.format != format {
        return Err(Error::Format(format!("expected a `{format}` model file, found `{}`", c.format)));
    }
    if c.version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported model version {}", c.version)));
    }
    Ok(c.model)
}

/// Format tag of a serialized model, without decoding the model itself.
pub fn model_format(s: &str) -> Result<String> {
    #[derive(Deserialize)]
    struct Tag {
        format: String,
    }
    Ok(serde_json::from_str::<Tag>(s)?.format)
}

impl<T: Scalar> HierarchicalModel<T> {
    pub fn from_json(s: &str) -> Result<Self> {
        from_container(MODEL_FORMAT, s)
    }
}

impl<T: Scalar> FlatModel<T> {
    pub fn to_json(&self, seed: u64) -> Result<String> {
        to_container(FLAT_MODEL_FORMAT, seed, self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        from_container(FLAT_MODEL_FORMAT, s)
    }
}
