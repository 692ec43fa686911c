//! One function per subcommand. Each takes the effective configuration and
//! writes its artifacts through a [`Ctx`], which records file hashes for
//! the manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use agrisense::bench::{bench_model, compare, write_ranking_csv, BenchReport, WindowClassifier};
use agrisense::domain::{DailyWindow, PlantMeta, SpectralSample, Treatment};
use agrisense::eval::{
    chi, evaluate_hierarchical, period_stability, silhouette, treatment_names, ConfusionMatrix,
    EvalReport, PermutationConfig, Perturbation,
};
use agrisense::features::feature_vector;
use agrisense::ingest::{
    ingest_soil, join_labels, parse_labels_csv, parse_spectral_csv, parse_windows_csv, sort_spectra, write_labels_csv,
    write_soil_csv, write_spectral_csv, write_windows_csv, IngestReport,
};
use agrisense::learn::hierarchical::{model_format, PairModel, FLAT_MODEL_FORMAT, MODEL_FORMAT};
use agrisense::learn::{fit_flat, fit_hierarchical, fit_svm, LinearHyper, Standardizer};
use agrisense::preprocess::{preprocess, DropReport};
use agrisense::spectral::{anova_p, pca_fit, pca_transform, sw_scan, SpectralIndex, WavelengthGrid};
use agrisense::synth::{gen_soil, gen_spectral};
use agrisense::{eval, Error, Flat, Hierarchical, Result};
use chrono::NaiveDate;
use ndarray::Array2;
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::FileHash;

/// Output directory plus the hashes of everything read and written.
pub struct Ctx {
    pub out: PathBuf,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

impl Ctx {
    pub fn new(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        Ok(Self {
            out: out.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        self.inputs.push(FileHash::from_bytes(path, &bytes));
        Ok(bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        self.outputs.push(FileHash::from_bytes(&path, bytes));
        Ok(())
    }

    fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("no input given: pass {flag} or set it under [paths]")))
}

/// `metric,value` CSV used for small summary reports.
fn metric_csv(rows: &[(&str, String)]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["metric", "value"])?;
    for (k, v) in rows {
        w.write_record([*k, v.as_str()])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn synth(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let s = &cfg.synth;
    let (readings, metas) = gen_soil(&s.config)?;
    let spectra = gen_spectral(&s.config, s.spectral_amplitude, s.signal_channels)?;
    ctx.write_with("soil.csv", |b| write_soil_csv(b, &readings))?;
    ctx.write_with("labels.csv", |b| write_labels_csv(b, &metas))?;
    ctx.write_with("spectral.csv", |b| write_spectral_csv(b, &spectra))?;
    log::info!("synth: {} readings, {} plants, {} spectra", readings.len(), metas.len(), spectra.len());
    Ok(())
}

fn ingest_rows(r: &IngestReport) -> Vec<(&'static str, String)> {
    vec![
        ("input_rows", r.input_rows().to_string()),
        ("accepted", r.accepted.to_string()),
        ("rejected_out_of_range", r.rejected_out_of_range.to_string()),
        ("rejected_malformed", r.rejected_malformed.to_string()),
        ("duplicates_dropped", r.duplicates_dropped.to_string()),
    ]
}

pub fn ingest(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let bytes = ctx.read(required(&cfg.paths.soil, "--soil")?)?;
    let (readings, report) = ingest_soil(bytes.as_slice(), &cfg.ingest)?;
    ctx.write_with("soil_clean.csv", |b| write_soil_csv(b, &readings))?;
    ctx.write_json("ingest_report.json", &report)?;
    ctx.write("ingest_report.csv", &metric_csv(&ingest_rows(&report))?)
}

#[derive(Serialize)]
struct PreprocessReport {
    ingest: IngestReport,
    drops: DropReport,
}

pub fn preprocess_cmd(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let bytes = ctx.read(required(&cfg.paths.soil, "--soil")?)?;
    let (readings, ingest) = ingest_soil(bytes.as_slice(), &cfg.ingest)?;
    let (windows, drops) = preprocess(&readings, &cfg.preprocess)?;
    ctx.write_with("windows.csv", |b| write_windows_csv(b, &windows))?;
    let mut rows = ingest_rows(&ingest);
    rows.extend([
        ("plants_in", drops.plants_in.to_string()),
        ("plants_skipped", drops.plants_skipped.len().to_string()),
        ("days_total", drops.days_total.to_string()),
        ("days_dropped", drops.days_dropped.to_string()),
        ("windows_emitted", drops.windows_emitted.to_string()),
    ]);
    ctx.write_json("preprocess_report.json", &PreprocessReport { ingest, drops })?;
    ctx.write("preprocess_report.csv", &metric_csv(&rows)?)
}

pub fn features(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let windows = read_windows(cfg, ctx)?;
    let rows: Vec<_> = windows.iter().map(|w| feature_vector(w, cfg.features.set)).collect();
    ctx.write_with("features.csv", |b| agrisense::features::write_features_csv(b, cfg.features.set, &rows))
}

fn read_windows(cfg: &RunConfig, ctx: &mut Ctx) -> Result<Vec<DailyWindow>> {
    let bytes = ctx.read(required(&cfg.paths.windows, "--windows")?)?;
    parse_windows_csv(bytes.as_slice())
}

fn read_labels(cfg: &RunConfig, ctx: &mut Ctx) -> Result<Vec<PlantMeta>> {
    let bytes = ctx.read(required(&cfg.paths.labels, "--labels")?)?;
    parse_labels_csv(bytes.as_slice())
}

/// Windows in `[start, end)` joined to their treatment; unlabeled windows
/// are dropped and counted.
fn labeled_period(
    windows: Vec<DailyWindow>,
    metas: &[PlantMeta],
    start: NaiveDate,
    end: NaiveDate,
) -> Result<(Vec<DailyWindow>, Vec<Treatment>, usize)> {
    let in_period: Vec<DailyWindow> = windows.into_iter().filter(|w| start <= w.date && w.date < end).collect();
    let (joined, dropped) = join_labels(in_period, metas)?;
    if dropped > 0 {
        log::warn!("{dropped} windows without labels dropped");
    }
    if joined.is_empty() {
        return Err(Error::Domain(format!("no labeled windows in [{start}, {end})")));
    }
    let labels = joined.iter().map(|l| l.treatment).collect();
    Ok((joined.into_iter().map(|l| l.record).collect(), labels, dropped))
}

#[derive(Serialize)]
struct TrainReport {
    model: String,
    period: [NaiveDate; 2],
    n_windows: usize,
    unlabeled_dropped: usize,
    class_counts: BTreeMap<String, usize>,
    /// Mean level-1 training loss per epoch; empty for non-network models.
    loss_history: Vec<f64>,
    train_metrics: EvalReport,
}

pub fn train(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let windows = read_windows(cfg, ctx)?;
    let metas = read_labels(cfg, ctx)?;
    let e = &cfg.eval;
    let (windows, labels, dropped) = labeled_period(windows, &metas, e.train_start, e.train_end)?;
    let mut class_counts = BTreeMap::new();
    for t in &labels {
        *class_counts.entry(t.to_string()).or_insert(0) += 1;
    }
    let hcfg = &cfg.model.hierarchical;
    let split = format!("train [{}, {})", e.train_start, e.train_end);
    let (descriptor, json, loss_history, train_metrics) = match cfg.model.flat {
        Some(kind) => {
            let m: Flat = fit_flat(&windows, &labels, kind, hcfg)?;
            let report = flat_report(&m, &windows, &labels, &split, cfg.seed)?;
            (m.descriptor(), m.to_json(cfg.seed)?, Vec::new(), report)
        }
        None => {
            let m: Hierarchical = fit_hierarchical(&windows, &labels, hcfg)?;
            let loss = match &m.level1 {
                PairModel::ResNet(r) => r.loss_history.clone(),
                PairModel::Logistic { .. } => Vec::new(),
            };
            let report = evaluate_hierarchical(&m, &windows, &labels, &split, &Perturbation::default())?;
            (hcfg.descriptor(), m.to_json()?, loss, report)
        }
    };
    ctx.write("model.json", json.as_bytes())?;
    let report = TrainReport {
        model: descriptor,
        period: [e.train_start, e.train_end],
        n_windows: windows.len(),
        unlabeled_dropped: dropped,
        class_counts,
        loss_history,
        train_metrics,
    };
    ctx.write_json("train_report.json", &report)?;
    let mut rows = vec![
        ("n_windows", report.n_windows.to_string()),
        ("train_accuracy", report.train_metrics.accuracy.to_string()),
    ];
    let names: Vec<String> = (0..report.loss_history.len()).map(|i| format!("loss_epoch_{}", i + 1)).collect();
    for (n, l) in names.iter().zip(&report.loss_history) {
        rows.push((n.as_str(), l.to_string()));
    }
    ctx.write("train_report.csv", &metric_csv(&rows)?)
}

fn flat_report(m: &Flat, windows: &[DailyWindow], truth: &[Treatment], split: &str, seed: u64) -> Result<EvalReport> {
    let pred: Vec<usize> = m.predict(windows).iter().map(|t| t.index()).collect();
    let t: Vec<usize> = truth.iter().map(|t| t.index()).collect();
    let cm = ConfusionMatrix::from_predictions(&t, &pred, Treatment::ALL.len())?;
    EvalReport::from_confusion(m.descriptor(), split, seed, treatment_names(), cm)
}

/// A trained model of either format.
pub enum AnyModel {
    Hierarchical(Hierarchical),
    Flat(Flat),
}

impl AnyModel {
    pub fn parse(text: &str) -> Result<Self> {
        let format = model_format(text)?;
        if format == MODEL_FORMAT {
            Ok(AnyModel::Hierarchical(Hierarchical::from_json(text)?))
        } else if format == FLAT_MODEL_FORMAT {
            Ok(AnyModel::Flat(Flat::from_json(text)?))
        } else {
            Err(Error::Format(format!("unknown model format `{format}`")))
        }
    }

    fn classifier(&self) -> &dyn WindowClassifier {
        match self {
            AnyModel::Hierarchical(m) => m,
            AnyModel::Flat(m) => m,
        }
    }
}

fn read_model(path: &Path, ctx: &mut Ctx) -> Result<AnyModel> {
    let bytes = ctx.read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))?;
    AnyModel::parse(text)
}

#[derive(Serialize)]
struct PeriodRow {
    start: NaiveDate,
    end: NaiveDate,
    n_test: usize,
    accuracy: f64,
    pair_accuracy: Option<f64>,
}

pub fn evaluate(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let model_path = cfg
        .paths
        .models
        .first()
        .ok_or_else(|| Error::Config("no model given: pass --model or set paths.models".into()))?;
    let model = read_model(model_path, ctx)?;
    let e = &cfg.eval;
    let perturb = Perturbation {
        mask_fraction: e.mask_fraction,
        noise_sigma: e.noise_sigma,
        seed: cfg.seed,
    };
    perturb.validate()?;
    let windows = if perturb.mask_fraction > 0.0 {
        // masking acts on raw readings, so windows are rebuilt from soil data
        let bytes = ctx.read(required(&cfg.paths.soil, "--soil")?)?;
        let (readings, _) = ingest_soil(bytes.as_slice(), &cfg.ingest)?;
        let (kept, removed) = perturb.mask(&readings)?;
        log::info!("masked {removed} of {} readings", readings.len());
        preprocess(&kept, &cfg.preprocess)?.0
    } else {
        read_windows(cfg, ctx)?
    };
    let metas = read_labels(cfg, ctx)?;
    let (windows, truth, _) = labeled_period(windows, &metas, e.test_start, e.test_end)?;
    let mut split = format!("test [{}, {})", e.test_start, e.test_end);
    if perturb.mask_fraction > 0.0 {
        split += &format!(" mask={}", perturb.mask_fraction);
    }
    if perturb.noise_sigma > 0.0 {
        split += &format!(" noise={}", perturb.noise_sigma);
    }
    let report = match &model {
        AnyModel::Hierarchical(m) => evaluate_hierarchical(m, &windows, &truth, &split, &perturb)?,
        AnyModel::Flat(m) => {
            if perturb.noise_sigma > 0.0 {
                return Err(Error::Config("noise evaluation needs a hierarchical model".into()));
            }
            flat_report(m, &windows, &truth, &split, cfg.seed)?
        }
    };
    ctx.write("eval_report.json", report.to_json()?.as_bytes())?;
    ctx.write_with("eval_report.csv", |b| report.write_csv(b))?;
    if !e.periods.is_empty() {
        let AnyModel::Hierarchical(m) = &model else {
            return Err(Error::Config("period breakdown needs a hierarchical model".into()));
        };
        let periods = period_stability(m, &windows, &truth, &e.periods)?;
        let rows: Vec<PeriodRow> = periods
            .iter()
            .map(|p| PeriodRow {
                start: p.start,
                end: p.end,
                n_test: p.report.n_test,
                accuracy: p.report.accuracy,
                pair_accuracy: p.report.pair_accuracy,
            })
            .collect();
        ctx.write_json("periods.json", &periods)?;
        ctx.write_with("periods.csv", |b| {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(b);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    log::info!("{}: accuracy {:.4} on {} windows", report.model, report.accuracy, report.n_test);
    Ok(())
}

/// Spectra of the configured session and groups, with group indices.
struct SpectralSelection {
    session: NaiveDate,
    samples: Vec<SpectralSample>,
    groups: Vec<usize>,
    treatments: Vec<Treatment>,
}

fn select_spectra(cfg: &RunConfig, ctx: &mut Ctx) -> Result<SpectralSelection> {
    let bytes = ctx.read(required(&cfg.paths.spectral, "--spectral")?)?;
    let (mut spectra, _) = parse_spectral_csv(bytes.as_slice())?;
    sort_spectra(&mut spectra);
    let metas = read_labels(cfg, ctx)?;
    let session = match cfg.spectral.session {
        Some(s) => s,
        None => spectra
            .iter()
            .map(|s| s.session_date)
            .min()
            .ok_or_else(|| Error::Domain("no spectral samples".into()))?,
    };
    let in_session: Vec<SpectralSample> = spectra.into_iter().filter(|s| s.session_date == session).collect();
    let (joined, _) = join_labels(in_session, &metas)?;
    let mut sel = SpectralSelection {
        session,
        samples: Vec::new(),
        groups: Vec::new(),
        treatments: Vec::new(),
    };
    for l in joined {
        if let Some(g) = cfg.spectral.groups.iter().position(|t| *t == l.treatment) {
            sel.samples.push(l.record);
            sel.groups.push(g);
            sel.treatments.push(l.treatment);
        }
    }
    for (g, t) in cfg.spectral.groups.iter().enumerate() {
        if sel.groups.iter().filter(|x| **x == g).count() < 2 {
            return Err(Error::Domain(format!("session {session}: fewer than two `{t}` spectra")));
        }
    }
    Ok(sel)
}

fn reflectance_matrix(samples: &[SpectralSample]) -> Array2<f64> {
    let d = samples.first().map_or(0, |s| s.reflectance.len());
    Array2::from_shape_fn((samples.len(), d), |(i, j)| samples[i].reflectance[j])
}

#[derive(Serialize)]
struct PermtestReport {
    session: NaiveDate,
    groups: Vec<Treatment>,
    n_samples: usize,
    folds: usize,
    n_perm: usize,
    seed: u64,
    observed_accuracy: f64,
    p_value: f64,
    failed_permutations: usize,
    null: Vec<f64>,
}

/// Standardize-then-linear-SVM pipeline fitted inside each fold.
pub fn svm_fit_predict(
    xtr: ndarray::ArrayView2<'_, f64>,
    ytr: &[usize],
    xte: ndarray::ArrayView2<'_, f64>,
) -> Result<Vec<usize>> {
    use agrisense::learn::Classifier;
    let st = Standardizer::fit(xtr);
    let m = fit_svm(st.transform(xtr).view(), ytr, &LinearHyper::svm())?;
    Ok(m.predict(st.transform(xte).view()))
}

pub fn permtest(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let sel = select_spectra(cfg, ctx)?;
    let x = reflectance_matrix(&sel.samples);
    let pc = PermutationConfig {
        folds: cfg.permtest.folds,
        n_perm: cfg.permtest.n_perm,
        seed: cfg.seed,
        threads: cfg.threads,
    };
    let r = eval::permutation_test(x.view(), &sel.groups, &pc, svm_fit_predict)?;
    let report = PermtestReport {
        session: sel.session,
        groups: cfg.spectral.groups.clone(),
        n_samples: sel.samples.len(),
        folds: pc.folds,
        n_perm: pc.n_perm,
        seed: pc.seed,
        observed_accuracy: r.observed,
        p_value: r.p_value,
        failed_permutations: r.failed.len(),
        null: r.null.clone(),
    };
    ctx.write_json("permtest.json", &report)?;
    ctx.write(
        "permtest.csv",
        &metric_csv(&[
            ("n_samples", report.n_samples.to_string()),
            ("observed_accuracy", report.observed_accuracy.to_string()),
            ("p_value", report.p_value.to_string()),
            ("failed_permutations", report.failed_permutations.to_string()),
        ])?,
    )?;
    ctx.write_with("permtest_null.csv", |b| {
        writeln!(b, "permutation,accuracy")?;
        for (i, a) in r.null.iter().enumerate() {
            writeln!(b, "{i},{a}")?;
        }
        Ok(())
    })?;
    log::info!("permtest: accuracy {:.4}, p = {:.4}", r.observed, r.p_value);
    Ok(())
}

#[derive(Serialize)]
struct IndexAnova {
    index: String,
    p_value: f64,
}

#[derive(Serialize)]
struct SpectralReport {
    session: NaiveDate,
    groups: Vec<Treatment>,
    n_samples: usize,
    index_anova: Vec<IndexAnova>,
    sw_min_p: f64,
    sw_min_wavelength_nm: f64,
    sw_bonferroni_min_p: f64,
    pca_explained_variance_ratio: Vec<f64>,
    silhouette: f64,
    calinski_harabasz: f64,
}

pub fn spectral_index(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let sel = select_spectra(cfg, ctx)?;
    let n_groups = cfg.spectral.groups.len();
    let indices = [SpectralIndex::Ndsi, SpectralIndex::Ni, SpectralIndex::N1];
    let mut values = vec![Vec::with_capacity(sel.samples.len()); indices.len()];
    for s in &sel.samples {
        for (k, ix) in indices.iter().enumerate() {
            values[k].push(ix.eval(&s.reflectance)?);
        }
    }
    let by_group = |v: &[f64]| -> Vec<Vec<f64>> {
        (0..n_groups)
            .map(|g| v.iter().zip(&sel.groups).filter(|(_, y)| **y == g).map(|(x, _)| *x).collect())
            .collect()
    };
    let index_anova = indices
        .iter()
        .zip(&values)
        .map(|(ix, v)| {
            Ok(IndexAnova {
                index: ix.name().to_string(),
                p_value: anova_p(&by_group(v), cfg.spectral.anova)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spectra_by_group: Vec<Vec<Vec<f64>>> = (0..n_groups)
        .map(|g| {
            sel.samples
                .iter()
                .zip(&sel.groups)
                .filter(|(_, y)| **y == g)
                .map(|(s, _)| s.reflectance.clone())
                .collect()
        })
        .collect();
    let scan = sw_scan(&spectra_by_group, cfg.spectral.anova)?;
    let x = reflectance_matrix(&sel.samples);
    let k = cfg.spectral.pca_components.min(x.nrows().min(x.ncols()));
    let pca = pca_fit(x.view(), k)?;
    let scores = pca_transform(&pca, x.view())?;
    let report = SpectralReport {
        session: sel.session,
        groups: cfg.spectral.groups.clone(),
        n_samples: sel.samples.len(),
        index_anova,
        sw_min_p: scan.min_p,
        sw_min_wavelength_nm: WavelengthGrid::wavelength(scan.min_channel),
        sw_bonferroni_min_p: scan.adjusted_min,
        pca_explained_variance_ratio: pca.explained_variance_ratio(),
        silhouette: silhouette(scores.view(), &sel.groups)?,
        calinski_harabasz: chi(scores.view(), &sel.groups)?,
    };
    ctx.write_with("spectral_indices.csv", |b| {
        writeln!(b, "plant_id,session_date,leaf_id,treatment,ndsi,ni,n1")?;
        for (i, s) in sel.samples.iter().enumerate() {
            writeln!(
                b,
                "{},{},{},{},{},{},{}",
                s.plant_id, s.session_date, s.leaf_id, sel.treatments[i], values[0][i], values[1][i], values[2][i]
            )?;
        }
        Ok(())
    })?;
    ctx.write_with("sw_scan.csv", |b| {
        writeln!(b, "channel,wavelength_nm,p_value,degenerate")?;
        for (c, p) in scan.p_values.iter().enumerate() {
            writeln!(b, "{c},{},{p},{}", WavelengthGrid::wavelength(c), scan.degenerate[c])?;
        }
        Ok(())
    })?;
    ctx.write_json("spectral_report.json", &report)?;
    let mut rows: Vec<(&str, String)> = Vec::new();
    let names: Vec<String> = report.index_anova.iter().map(|a| format!("anova_p_{}", a.index.to_lowercase())).collect();
    for (n, a) in names.iter().zip(&report.index_anova) {
        rows.push((n.as_str(), a.p_value.to_string()));
    }
    rows.push(("sw_min_p", report.sw_min_p.to_string()));
    rows.push(("sw_min_wavelength_nm", report.sw_min_wavelength_nm.to_string()));
    rows.push(("sw_bonferroni_min_p", report.sw_bonferroni_min_p.to_string()));
    let pc_names: Vec<String> = (1..=report.pca_explained_variance_ratio.len()).map(|i| format!("pca_evr_{i}")).collect();
    for (n, v) in pc_names.iter().zip(&report.pca_explained_variance_ratio) {
        rows.push((n.as_str(), v.to_string()));
    }
    rows.push(("silhouette", report.silhouette.to_string()));
    rows.push(("calinski_harabasz", report.calinski_harabasz.to_string()));
    ctx.write("spectral_report.csv", &metric_csv(&rows)?)
}

fn bench_rows(r: &BenchReport) -> Vec<(&'static str, String)> {
    let na = |v: Option<String>| v.unwrap_or_else(|| "unavailable".into());
    vec![
        ("model", r.model.clone()),
        ("n_windows", r.n_windows.to_string()),
        ("repeats", r.repeats.to_string()),
        ("wall_mean_s", r.wall_mean_s.to_string()),
        ("wall_min_s", r.wall_min_s.to_string()),
        ("wall_max_s", r.wall_max_s.to_string()),
        ("wall_std_s", r.wall_std_s.to_string()),
        ("wall_cv", r.wall_cv.to_string()),
        ("unstable", r.unstable.to_string()),
        ("per_window_latency_s", r.per_window_latency_s.to_string()),
        ("cpu_utilization_percent", na(r.cpu_utilization_percent.map(|v| v.to_string()))),
        ("peak_memory_bytes", na(r.peak_memory_bytes.map(|v| v.to_string()))),
        ("peak_memory_source", r.peak_memory_source.clone()),
        ("power", r.power.clone()),
        ("prediction_hash", r.prediction_hash.clone()),
        ("hashes_identical", r.hashes_identical.to_string()),
    ]
}

pub fn bench(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    if cfg.paths.models.is_empty() {
        return Err(Error::Config("no model given: pass --model or set paths.models".into()));
    }
    let windows = read_windows(cfg, ctx)?;
    let mut reports = Vec::new();
    for (i, path) in cfg.paths.models.iter().enumerate() {
        let model = read_model(path, ctx)?;
        let r = bench_model(model.classifier(), &windows, cfg.bench.repeats)?;
        if r.unstable {
            log::warn!("{}: wall-time CV {:.2} above threshold", r.model, r.wall_cv);
        }
        ctx.write(&format!("bench_{}.json", i + 1), r.to_json()?.as_bytes())?;
        ctx.write(&format!("bench_{}.csv", i + 1), &metric_csv(&bench_rows(&r))?)?;
        reports.push(r);
    }
    if reports.len() >= 2 {
        let rows = compare(&reports)?;
        ctx.write_json("ranking.json", &rows)?;
        ctx.write_with("ranking.csv", |b| write_ranking_csv(b, &rows))?;
    }
    Ok(())
}

const REPORT_KEYS: [&str; 12] = [
    "accuracy",
    "pair_accuracy",
    "f1_weighted",
    "f1_macro",
    "pair_violations",
    "observed_accuracy",
    "p_value",
    "sw_bonferroni_min_p",
    "silhouette",
    "calinski_harabasz",
    "per_window_latency_s",
    "wall_cv",
];

#[derive(Serialize)]
struct SummaryEntry {
    file: String,
    model: Option<String>,
    metrics: BTreeMap<String, f64>,
}

/// Collects headline numbers from every JSON report in a directory.
pub fn report(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let dir = cfg.paths.reports.clone().unwrap_or_else(|| cfg.paths.out.clone());
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && !name.ends_with(".manifest.json") && name != "summary.json" && name != "model.json"
        })
        .collect();
    files.sort();
    let mut entries = Vec::new();
    for path in files {
        let bytes = ctx.read(&path)?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)?;
        let Some(obj) = value.as_object() else { continue };
        let mut metrics = BTreeMap::new();
        for k in REPORT_KEYS {
            if let Some(v) = obj.get(k).and_then(serde_json::Value::as_f64) {
                metrics.insert(k.to_string(), v);
            }
        }
        if metrics.is_empty() {
            continue;
        }
        entries.push(SummaryEntry {
            file: path.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string(),
            model: obj.get("model").and_then(|m| m.as_str()).map(str::to_string),
            metrics,
        });
    }
    ctx.write_json("summary.json", &entries)?;
    ctx.write_with("summary.csv", |b| {
        writeln!(b, "file,model,metric,value")?;
        for e in &entries {
            for (k, v) in &e.metrics {
                writeln!(b, "{},{},{k},{v}", e.file, e.model.as_deref().unwrap_or(""))?;
            }
        }
        Ok(())
    })
}
