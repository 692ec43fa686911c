//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any fails. Built with `harness = false` so the lines are
//! always visible.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use agrisense::bench::bench_model;
use agrisense::domain::{leaf_ec, DailyWindow, Rootstock, SoilReading, Treatment};
use agrisense::eval::{
    chi, evaluate_hierarchical, metrics, permutation_test, silhouette, stratified_kfold, ConfusionMatrix, EvalReport,
    PermutationConfig, Perturbation,
};
use agrisense::features::moments;
use agrisense::learn::resnet::{loss_and_grad, Architecture};
use agrisense::learn::{
    accuracy, fit_flat, fit_hierarchical, fit_svm, linear::logistic_loss_grad, Classifier, HierarchicalConfig, Level2Kind,
    LinearHyper, Standardizer,
};
use agrisense::preprocess::{preprocess, PreprocessConfig};
use agrisense::rng::stream;
use agrisense::spectral::{anova_f, anova_p, pca_fit, pca_transform, sw_scan, AnovaMode, SpectralIndex};
use agrisense::synth::{gen_soil, gen_spectral, SynthConfig, DEFAULT_SIGNAL_CHANNELS, DEFAULT_SPECTRAL_AMPLITUDE};
use agrisense::Hierarchical;
use chrono::NaiveDate;
use ndarray::{Array1, Array2, Array3};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn split_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 20).unwrap()
}

// ---------------------------------------------------------------- oracles

/// Nearest grid channel by exhaustive search.
fn nearest_channel(lambda: f64) -> usize {
    (0..288)
        .map(|i| (i, (340.0 + 510.0 * i as f64 / 287.0 - lambda).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

/// One-way ANOVA F in exact rational arithmetic.
fn exact_anova_f(groups: &[Vec<i64>]) -> f64 {
    let q = |v: i64| Ratio::<i128>::from_integer(v as i128);
    let n: i64 = groups.iter().map(|g| g.len() as i64).sum();
    let k = groups.len() as i64;
    let grand = groups.iter().flatten().map(|v| q(*v)).sum::<Ratio<i128>>() / q(n);
    let mut ssb = q(0);
    let mut ssw = q(0);
    for g in groups {
        let m = g.iter().map(|v| q(*v)).sum::<Ratio<i128>>() / q(g.len() as i64);
        ssb += (m - grand) * (m - grand) * q(g.len() as i64);
        for v in g {
            ssw += (q(*v) - m) * (q(*v) - m);
        }
    }
    let f = (ssb / q(k - 1)) / (ssw / q(n - k));
    *f.numer() as f64 / *f.denom() as f64
}

/// Precision, recall, F1 per class straight from label lists.
fn brute_metrics(truth: &[usize], pred: &[usize], k: usize) -> (f64, Vec<[f64; 3]>, [f64; 3], [f64; 3]) {
    let n = truth.len() as f64;
    let acc = truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64 / n;
    let mut per = Vec::new();
    let mut weighted = [0.0; 3];
    let mut macro_ = [0.0; 3];
    for c in 0..k {
        let tp = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p == c).count() as f64;
        let fp = truth.iter().zip(pred).filter(|(t, p)| **t != c && **p == c).count() as f64;
        let fn_ = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p != c).count() as f64;
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let support = tp + fn_;
        for (i, v) in [p, r, f].into_iter().enumerate() {
            weighted[i] += v * support / n;
            macro_[i] += v / k as f64;
        }
        per.push([p, r, f]);
    }
    (acc, per, weighted, macro_)
}

fn brute_silhouette(x: &Array2<f64>, y: &[usize]) -> f64 {
    let n = y.len();
    let d = |i: usize, j: usize| (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt();
    let labels: Vec<usize> = {
        let mut l = y.to_vec();
        l.sort();
        l.dedup();
        l
    };
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && y[j] == y[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d(i, j)).sum::<f64>() / own.len() as f64;
        let b = labels
            .iter()
            .filter(|&&c| c != y[i])
            .map(|&c| {
                let m: Vec<usize> = (0..n).filter(|&j| y[j] == c).collect();
                m.iter().map(|&j| d(i, j)).sum::<f64>() / m.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        let s = if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 };
        total += s;
    }
    total / n as f64
}

fn brute_chi(x: &Array2<f64>, y: &[usize]) -> f64 {
    let n = y.len();
    let mut labels = y.to_vec();
    labels.sort();
    labels.dedup();
    let k = labels.len();
    let grand = x.mean_axis(ndarray::Axis(0)).unwrap();
    let (mut b, mut w) = (0.0, 0.0);
    for c in labels {
        let idx: Vec<usize> = (0..n).filter(|&i| y[i] == c).collect();
        let rows = x.select(ndarray::Axis(0), &idx);
        let m = rows.mean_axis(ndarray::Axis(0)).unwrap();
        b += idx.len() as f64 * (&m - &grand).mapv(|v| v * v).sum();
        for r in rows.rows() {
            w += (&r - &m).mapv(|v| v * v).sum();
        }
    }
    (b / (k - 1) as f64) / (w / (n - k) as f64)
}

// ---------------------------------------------------------------- criteria

fn c1_formulas() -> Verdict {
    let mut rng = stream(101, 0);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        // indices
        let r: Vec<f64> = (0..288).map(|_| rng.random_range(0.01..1.0)).collect();
        for (ix, (la, lb)) in [
            (SpectralIndex::Ndsi, (665.0, 842.0)),
            (SpectralIndex::Ni, (705.0, 750.0)),
            (SpectralIndex::N1, (600.0, 800.0)),
        ] {
            let (a, b) = (r[nearest_channel(la)], r[nearest_channel(lb)]);
            worst = worst.max(rel(ix.eval(&r).unwrap(), (a - b) / (a + b)));
        }
        // metrics
        let k = 2 + case % 4;
        let n = rng.random_range(5..200);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.random_bool(0.6) { t } else { rng.random_range(0..k) })
            .collect();
        let m = metrics::<f64>(&ConfusionMatrix::from_predictions(&truth, &pred, k).unwrap()).unwrap();
        let (acc, per, wt, mac) = brute_metrics(&truth, &pred, k);
        worst = worst.max(rel(m.accuracy, acc));
        for (got, want) in [
            ([m.precision_weighted, m.recall_weighted, m.f1_weighted], wt),
            ([m.precision_macro, m.recall_macro, m.f1_macro], mac),
        ] {
            for i in 0..3 {
                worst = worst.max(rel(got[i], want[i]));
            }
        }
        for (c, pc) in per.iter().enumerate() {
            worst = worst.max(rel(m.per_class[c].precision, pc[0]));
            worst = worst.max(rel(m.per_class[c].recall, pc[1]));
            worst = worst.max(rel(m.per_class[c].f1, pc[2]));
        }
        // leaf EC: conductance times cell constant recovers the length
        let (r2, l, a) = (
            10f64.powf(rng.random_range(0.0..9.0)),
            rng.random_range(0.01..5.0),
            rng.random_range(0.001..2.0),
        );
        worst = worst.max(rel(leaf_ec(r2, l, a).unwrap() * r2 * a, l));
        // ANOVA F on integer data against exact rationals
        let g = 2 + case % 3;
        let groups: Vec<Vec<i64>> = (0..g)
            .map(|_| (0..rng.random_range(2..12)).map(|_| rng.random_range(-1000..1000)).collect())
            .collect();
        let as_f: Vec<Vec<f64>> = groups.iter().map(|v| v.iter().map(|x| *x as f64).collect()).collect();
        worst = worst.max(rel(anova_f(&as_f).unwrap(), exact_anova_f(&groups)));
    }
    verdict(worst <= 1e-10, format!("200 cases, worst relative error {worst:.2e}"))
}

fn c2_moments() -> Verdict {
    let mut rng = stream(102, 0);
    let mut worst: f64 = 0.0;
    let mut worst_affine: f64 = 0.0;
    let q = |v: i64| Ratio::<i128>::from_integer(v as i128);
    let to_f = |r: Ratio<i128>| *r.numer() as f64 / *r.denom() as f64;
    for _ in 0..1000 {
        // integer-valued windows so the central moments are exact rationals
        let scale = rng.random_range(1..10_000);
        let xi: Vec<i64> = (0..48)
            .map(|_| (rng.sample::<f64, _>(StandardNormal).powi(rng.random_range(1..4)) * scale as f64) as i64)
            .collect();
        let n = q(48);
        let mean = xi.iter().map(|v| q(*v)).sum::<Ratio<i128>>() / n;
        let cm = |p: i32| xi.iter().map(|v| (q(*v) - mean).pow(p)).sum::<Ratio<i128>>() / n;
        let (m2, m3) = (to_f(cm(2)), to_f(cm(3)));
        if m2 == 0.0 {
            continue;
        }
        let skew = m3 / m2.powf(1.5);
        let kurt = to_f(cm(4) / (cm(2) * cm(2))) - 3.0;
        let x: Vec<f64> = xi.iter().map(|v| *v as f64).collect();
        let got = moments(&x).unwrap();
        let tol = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        worst = worst
            .max(tol(got.mean, to_f(mean)))
            .max(tol(got.std, m2.sqrt()))
            .max(tol(got.skewness, skew))
            .max(tol(got.excess_kurtosis, kurt));
        // affine maps leave shape unchanged; a negative scale flips skew
        let a = rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let b = rng.random_range(-100.0..100.0);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let t = moments(&y).unwrap();
        worst_affine = worst_affine
            .max(tol(t.skewness, a.signum() * got.skewness))
            .max(tol(t.excess_kurtosis, got.excess_kurtosis));
    }
    verdict(
        worst <= 1e-10 && worst_affine <= 1e-10,
        format!("1000 windows, worst error {worst:.2e}, affine {worst_affine:.2e} (relative, floor 1)"),
    )
}

fn fd_rel(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6)
}

fn c3_gradients() -> Verdict {
    let eps = 1e-5;
    let mut rng = stream(103, 0);
    // logistic
    let (n, d, k) = (12, 5, 3);
    let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let y: Vec<usize> = (0..n).map(|i| i % k).collect();
    let w = Array2::from_shape_fn((k, d), |_| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let b = Array1::from_shape_fn(k, |_| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let lambda = 1e-2;
    let (_, gw, gb) = logistic_loss_grad(&w, &b, x.view(), &y, lambda);
    let mut worst_log: f64 = 0.0;
    for _ in 0..10 {
        let dw = Array2::from_shape_fn((k, d), |_| rng.sample::<f64, _>(StandardNormal));
        let db = Array1::from_shape_fn(k, |_| rng.sample::<f64, _>(StandardNormal));
        let lp = logistic_loss_grad(&(&w + &(&dw * eps)), &(&b + &(&db * eps)), x.view(), &y, lambda).0;
        let lm = logistic_loss_grad(&(&w - &(&dw * eps)), &(&b - &(&db * eps)), x.view(), &y, lambda).0;
        let analytic = (&gw * &dw).sum() + (&gb * &db).sum();
        worst_log = worst_log.max(fd_rel(analytic, (lp - lm) / (2.0 * eps)));
    }
    // tiny resnet
    let arch = Architecture::new(2, 16, 2, 4, 3, 2).unwrap();
    let params: Vec<f64> = arch.init(7);
    let xs = Array3::from_shape_fn((4, 2, 16), |_| rng.sample::<f64, _>(StandardNormal));
    let ys = [0, 1, 1, 0];
    let (_, g) = loss_and_grad(&arch, &params, xs.view(), &ys);
    let mut worst_net: f64 = 0.0;
    for _ in 0..10 {
        let dir: Vec<f64> = (0..params.len()).map(|_| rng.sample(StandardNormal)).collect();
        let shifted = |s: f64| -> Vec<f64> { params.iter().zip(&dir).map(|(p, v)| p + s * v).collect() };
        let lp = loss_and_grad(&arch, &shifted(eps), xs.view(), &ys).0;
        let lm = loss_and_grad(&arch, &shifted(-eps), xs.view(), &ys).0;
        let analytic: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        worst_net = worst_net.max(fd_rel(analytic, (lp - lm) / (2.0 * eps)));
    }
    verdict(
        worst_log < 1e-4 && worst_net < 1e-4,
        format!("10 directions each: logistic {worst_log:.2e}, resnet1d {worst_net:.2e}"),
    )
}

/// Results of one seed of the soil experiments, shared by several criteria.
struct SoilRun {
    seed: u64,
    thomas_clean: EvalReport,
    thomas_noise: EvalReport,
    thomas_mask: EvalReport,
    pp40_clean: EvalReport,
    best_flat: f64,
    flat: [(Level2Kind, f64); 3],
}

struct SoilData {
    readings: Vec<SoilReading>,
    labels: HashMap<String, Treatment>,
    train: (Vec<DailyWindow>, Vec<Treatment>),
    test: (Vec<DailyWindow>, Vec<Treatment>),
}

fn with_labels(windows: Vec<DailyWindow>, labels: &HashMap<String, Treatment>) -> (Vec<DailyWindow>, Vec<Treatment>) {
    let y = windows.iter().map(|w| labels[&w.plant_id]).collect();
    (windows, y)
}

fn soil_data(rootstock: Rootstock, seed: u64) -> SoilData {
    let (readings, metas) = gen_soil(&SynthConfig::for_rootstock(rootstock, seed)).unwrap();
    let labels: HashMap<String, Treatment> = metas.iter().map(|m| (m.plant_id.clone(), m.treatment)).collect();
    let (windows, _) = preprocess(&readings, &PreprocessConfig::default()).unwrap();
    let (train, test): (Vec<_>, Vec<_>) = windows.into_iter().partition(|w| w.date < split_date());
    SoilData {
        train: with_labels(train, &labels),
        test: with_labels(test, &labels),
        readings,
        labels,
    }
}

struct Shared {
    runs: Vec<SoilRun>,
    /// Thomas model and test windows of the first seed, for the benchmark.
    bench_model: Hierarchical,
    bench_windows: Vec<DailyWindow>,
    elapsed: Duration,
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let t0 = Instant::now();
        let mut runs = Vec::new();
        let mut bench = None;
        for seed in SEEDS {
            let cfg = HierarchicalConfig {
                seed,
                ..HierarchicalConfig::default()
            };
            let th = soil_data(Rootstock::Thomas, seed);
            let model: Hierarchical = fit_hierarchical(&th.train.0, &th.train.1, &cfg).unwrap();
            let clean = evaluate_hierarchical(&model, &th.test.0, &th.test.1, "clean", &Perturbation::default()).unwrap();
            let noise =
                evaluate_hierarchical(&model, &th.test.0, &th.test.1, "noise", &Perturbation::noise(0.05, seed)).unwrap();
            let (kept, _) = Perturbation::masking(0.2, seed).mask(&th.readings).unwrap();
            let masked: Vec<DailyWindow> = preprocess(&kept, &PreprocessConfig::default())
                .unwrap()
                .0
                .into_iter()
                .filter(|w| w.date >= split_date())
                .collect();
            let (mw, my) = with_labels(masked, &th.labels);
            let mask = evaluate_hierarchical(&model, &mw, &my, "mask", &Perturbation::default()).unwrap();
            let flat = [Level2Kind::Forest, Level2Kind::Knn, Level2Kind::Svm].map(|kind| {
                let m = fit_flat::<f64>(&th.train.0, &th.train.1, kind, &cfg).unwrap();
                let pred: Vec<usize> = m.predict(&th.test.0).iter().map(|t| t.index()).collect();
                let truth: Vec<usize> = th.test.1.iter().map(|t| t.index()).collect();
                (kind, accuracy(&pred, &truth))
            });
            let pp = soil_data(Rootstock::PP40, seed);
            let pp_model: Hierarchical = fit_hierarchical(&pp.train.0, &pp.train.1, &cfg).unwrap();
            let pp_clean = evaluate_hierarchical(&pp_model, &pp.test.0, &pp.test.1, "clean", &Perturbation::default()).unwrap();
            runs.push(SoilRun {
                seed,
                thomas_clean: clean,
                thomas_noise: noise,
                thomas_mask: mask,
                pp40_clean: pp_clean,
                best_flat: flat.iter().map(|f| f.1).fold(0.0, f64::max),
                flat,
            });
            if bench.is_none() {
                bench = Some((model, th.test.0));
            }
        }
        let (bench_model, bench_windows) = bench.unwrap();
        Shared {
            runs,
            bench_model,
            bench_windows,
            elapsed: t0.elapsed(),
        }
    })
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn c4_hierarchical_superiority() -> Verdict {
    let s = shared();
    let mut ok = 0;
    let mut parts = Vec::new();
    for r in &s.runs {
        let h = r.thomas_clean.accuracy;
        let pass = h >= 0.80 && h - r.best_flat >= 0.10;
        ok += usize::from(pass);
        let flats: Vec<String> = r.flat.iter().map(|(k, a)| format!("{k} {}", pct(*a))).collect();
        parts.push(format!("seed {}: {} vs {}", r.seed, pct(h), flats.join("/")));
    }
    verdict(ok >= 4, format!("{ok}/5 seeds; {}", parts.join("; ")))
}

fn c5_rootstock_attenuation() -> Verdict {
    let s = shared();
    let mut ok = 0;
    let mut parts = Vec::new();
    for r in &s.runs {
        let gap = r.thomas_clean.accuracy - r.pp40_clean.accuracy;
        ok += usize::from(gap >= 0.05);
        parts.push(format!("{}-{}", pct(r.thomas_clean.accuracy), pct(r.pp40_clean.accuracy)));
    }
    verdict(ok >= 4, format!("{ok}/5 seeds; thomas-pp40 {}", parts.join(", ")))
}

fn svm_pipeline(
    xtr: ndarray::ArrayView2<'_, f64>,
    ytr: &[usize],
    xte: ndarray::ArrayView2<'_, f64>,
) -> agrisense::Result<Vec<usize>> {
    let st = Standardizer::fit(xtr);
    let m = fit_svm(st.transform(xtr).view(), ytr, &LinearHyper::svm())?;
    Ok(m.predict(st.transform(xte).view()))
}

fn c6_mvpa_vs_indices() -> Verdict {
    let mut ok = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let cfg = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let spectra = gen_spectral(&cfg, DEFAULT_SPECTRAL_AMPLITUDE, DEFAULT_SIGNAL_CHANNELS).unwrap();
        let labels: HashMap<String, Treatment> = cfg.plants().into_iter().map(|m| (m.plant_id, m.treatment)).collect();
        let first = spectra.iter().map(|s| s.session_date).min().unwrap();
        let sel: Vec<_> = spectra
            .iter()
            .filter(|s| s.session_date == first)
            .filter(|s| matches!(labels[&s.plant_id], Treatment::Control | Treatment::Salinity))
            .collect();
        let y: Vec<usize> = sel.iter().map(|s| usize::from(labels[&s.plant_id] == Treatment::Salinity)).collect();
        let x = Array2::from_shape_fn((sel.len(), 288), |(i, j)| sel[i].reflectance[j]);
        let pc = PermutationConfig {
            folds: 5,
            n_perm: 500,
            seed,
            threads: 1,
        };
        let perm = permutation_test(x.view(), &y, &pc, svm_pipeline).unwrap();
        let groups: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|g| sel.iter().zip(&y).filter(|(_, c)| **c == g).map(|(s, _)| s.reflectance.clone()).collect())
            .collect();
        let scan = sw_scan(&groups, AnovaMode::Analytic).unwrap();
        let index_p: Vec<f64> = SpectralIndex::ALL
            .iter()
            .map(|ix| {
                let g: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|r| ix.eval(r).unwrap()).collect()).collect();
                anova_p(&g, AnovaMode::Analytic).unwrap()
            })
            .collect();
        let pass = perm.p_value <= 0.01 && scan.adjusted_min > 0.05 && index_p.iter().all(|p| *p > 0.05);
        ok += usize::from(pass);
        let min_idx = index_p.iter().copied().fold(1.0, f64::min);
        parts.push(format!(
            "seed {seed}: acc {:.2} p {:.3}, sw-adj {:.2}, min index p {:.3}",
            perm.observed, perm.p_value, scan.adjusted_min, min_idx
        ));
    }
    verdict(ok >= 4, format!("{ok}/5 seeds; {}", parts.join("; ")))
}

fn c7_permutation_calibration() -> Verdict {
    let mut significant = 0;
    for t in 0..100u64 {
        let mut rng = stream(107, t);
        let (n, d) = (30, 8);
        let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
        let mut y: Vec<usize> = (0..n).map(|i| i % 2).collect();
        y.shuffle(&mut rng);
        let pc = PermutationConfig {
            folds: 5,
            n_perm: 200,
            seed: 1000 + t,
            threads: 1,
        };
        let r = permutation_test(x.view(), &y, &pc, svm_pipeline).unwrap();
        significant += usize::from(r.p_value < 0.05);
    }
    verdict(significant <= 15, format!("{significant}/100 null tests with p < 0.05"))
}

fn c8_stratification() -> Verdict {
    let mut rng = stream(108, 0);
    let mut cases = 0;
    let mut bad = 0;
    for _ in 0..300 {
        let k = [2, 5, 10][rng.random_range(0..3)];
        let n_classes = rng.random_range(2..6);
        let n = rng.random_range(k * n_classes..=500);
        let mut y: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
        // skew the class sizes while keeping every class at least k strong
        for v in y.iter_mut().skip(k * n_classes) {
            if rng.random_bool(0.5) {
                *v = 0;
            }
        }
        y.shuffle(&mut rng);
        let folds = stratified_kfold(&y, k, rng.random()).unwrap();
        cases += 1;
        let mut seen = vec![0; n];
        for f in &folds {
            for &i in f {
                seen[i] += 1;
            }
        }
        let partition = folds.len() == k && seen.iter().all(|s| *s == 1);
        let balanced = (0..n_classes).all(|c| {
            let total = y.iter().filter(|v| **v == c).count() as f64;
            folds.iter().all(|f| {
                let in_fold = f.iter().filter(|&&i| y[i] == c).count() as f64;
                (in_fold - total / k as f64).abs() <= 1.0
            })
        });
        bad += usize::from(!(partition && balanced));
    }
    verdict(bad == 0, format!("{cases} random label vectors, {bad} violations"))
}

fn c9_pca() -> Verdict {
    let mut rng = stream(109, 0);
    let (mut worst_var, mut worst_orth, mut worst_rec): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for case in 0..100 {
        let d = 2 + case % 11;
        let n = d + 5 + rng.random_range(0..20);
        let mix = Array2::from_shape_fn((d, d), |_| rng.sample::<f64, _>(StandardNormal));
        let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal)).dot(&mix);
        let model = pca_fit(x.view(), d).unwrap();
        // oracle: eigenvalues of the sample covariance
        let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
        let c = &x - &mean;
        let cov = c.t().dot(&c) / (n as f64 - 1.0);
        let m = nalgebra::DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
        let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in model.explained_variance.iter().zip(&eig) {
            if *want > 1e-9 * eig[0] {
                worst_var = worst_var.max(rel(*got, *want));
            }
        }
        let gram = model.components.dot(&model.components.t());
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                worst_orth = worst_orth.max((gram[[i, j]] - want).abs());
            }
        }
        // rank-deficient data is reproduced exactly from rank-many components
        let r = 1 + case % d.min(4);
        let low = Array2::from_shape_fn((n, r), |_| rng.sample::<f64, _>(StandardNormal))
            .dot(&Array2::from_shape_fn((r, d), |_| rng.sample::<f64, _>(StandardNormal)));
        let p = pca_fit(low.view(), r).unwrap();
        let back = p.inverse_transform(pca_transform(&p, low.view()).unwrap().view());
        let scale = low.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        worst_rec = worst_rec.max((&back - &low).iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale);
    }
    verdict(
        worst_var <= 1e-6 && worst_orth <= 1e-8 && worst_rec <= 1e-8,
        format!("100 cases: variance {worst_var:.2e}, orthonormality {worst_orth:.2e}, reconstruction {worst_rec:.2e}"),
    )
}

fn c10_clustering() -> Verdict {
    let mut rng = stream(110, 0);
    let mut worst: f64 = 0.0;
    let mut out_of_range = 0;
    for case in 0..1000 {
        let k = 2 + case % 3;
        let n = rng.random_range(k + 1..=20);
        let d = 1 + case % 4;
        let mut y: Vec<usize> = (0..n).map(|i| i % k).collect();
        y.shuffle(&mut rng);
        let x = Array2::from_shape_fn((n, d), |(i, _)| {
            y[i] as f64 * rng.random_range(0.0..3.0) + rng.sample::<f64, _>(StandardNormal)
        });
        let s = silhouette(x.view(), &y).unwrap();
        out_of_range += usize::from(!(-1.0..=1.0).contains(&s));
        if case < 200 {
            worst = worst.max(rel(s, brute_silhouette(&x, &y)));
            worst = worst.max(rel(chi(x.view(), &y).unwrap(), brute_chi(&x, &y)));
        }
    }
    verdict(
        worst <= 1e-10 && out_of_range == 0,
        format!("200 oracle cases worst {worst:.2e}; {out_of_range}/1000 silhouettes outside [-1, 1]"),
    )
}

fn c11_robustness() -> Verdict {
    let s = shared();
    let mut ok = 0;
    let mut parts = Vec::new();
    for r in &s.runs {
        let (c, n, m) = (r.thomas_clean.accuracy, r.thomas_noise.accuracy, r.thomas_mask.accuracy);
        ok += usize::from(n >= m && c - n <= 0.05);
        parts.push(format!("clean {} noise {} mask {}", pct(c), pct(n), pct(m)));
    }
    verdict(ok >= 4, format!("{ok}/5 seeds; {}", parts.join("; ")))
}

fn c12_consistency() -> Verdict {
    let s = shared();
    let mut evals = 0;
    let mut violations = 0;
    let mut order_breaks = 0;
    for r in &s.runs {
        for e in [&r.thomas_clean, &r.thomas_noise, &r.thomas_mask, &r.pp40_clean] {
            evals += 1;
            violations += e.pair_violations.unwrap();
            order_breaks += usize::from(e.accuracy > e.pair_accuracy.unwrap());
        }
    }
    verdict(
        violations == 0 && order_breaks == 0,
        format!("{evals} evaluations: {violations} pair violations, {order_breaks} with accuracy above pair accuracy"),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_agrisense"))
        .current_dir(dir)
        .args(args)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn c13_determinism() -> Verdict {
    let steps: [&[&str]; 5] = [
        &["synth", "--seed", "13", "--rootstock", "thomas", "--out", "run"],
        &["preprocess", "--seed", "13", "--soil", "run/soil.csv", "--out", "run"],
        &["features", "--seed", "13", "--windows", "run/windows.csv", "--out", "run"],
        &["train", "--seed", "13", "--windows", "run/windows.csv", "--labels", "run/labels.csv", "--out", "run"],
        &[
            "evaluate", "--seed", "13", "--model", "run/model.json", "--windows", "run/windows.csv", "--labels",
            "run/labels.csv", "--out", "run",
        ],
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        for s in steps {
            if !run_cli(d.path(), s) {
                return verdict(false, format!("`{}` failed", s.join(" ")));
            }
        }
    }
    let mut names: Vec<String> = std::fs::read_dir(dirs[0].path().join("run"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(dirs[0].path().join("run").join(n)).ok() != std::fs::read(dirs[1].path().join("run").join(n)).ok())
        .collect();
    verdict(
        differing.is_empty() && names.len() >= 8,
        format!("{} JSON files compared, {} differ {:?}", names.len(), differing.len(), differing),
    )
}

fn c14_bench() -> Verdict {
    let s = shared();
    let windows = &s.bench_windows[..474];
    let before: Vec<_> = s.bench_model.predict(windows);
    let r = bench_model(&s.bench_model, windows, 20).unwrap();
    let after: Vec<_> = s.bench_model.predict(windows);
    let pass = r.repeats == 20
        && r.n_windows == 474
        && r.wall_cv.is_finite()
        && r.hashes_identical
        && before == after
        && r.per_window_latency_s < 0.1;
    verdict(
        pass,
        format!(
            "474 windows x 20: latency {:.3} ms/window, CV {:.3}, hashes identical {}, outputs unchanged {}",
            1e3 * r.per_window_latency_s,
            r.wall_cv,
            r.hashes_identical,
            before == after
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Verdict); 14] = [
        (1, "formula exactness", 10, c1_formulas),
        (2, "moment oracle", 10, c2_moments),
        (3, "gradient checks", 60, c3_gradients),
        (4, "hierarchical superiority", 600, c4_hierarchical_superiority),
        (5, "rootstock attenuation", 600, c5_rootstock_attenuation),
        (6, "MVPA vs indices", 600, c6_mvpa_vs_indices),
        (7, "permutation calibration", 600, c7_permutation_calibration),
        (8, "stratification invariants", 10, c8_stratification),
        (9, "PCA correctness", 10, c9_pca),
        (10, "clustering validity", 10, c10_clustering),
        (11, "robustness ordering", 600, c11_robustness),
        (12, "hierarchical consistency", 600, c12_consistency),
        (13, "determinism", 300, c13_determinism),
        (14, "bench harness sanity", 300, c14_bench),
    ];
    let mut failed = Vec::new();
    for (id, name, budget, f) in criteria {
        let t0 = Instant::now();
        let v = f();
        let mut secs = t0.elapsed().as_secs_f64();
        if id == 4 {
            // the shared soil experiments are charged to the first user
            secs = secs.max(shared().elapsed.as_secs_f64());
        }
        let in_time = secs < budget as f64;
        let pass = v.pass && in_time;
        let timing = if in_time { String::new() } else { format!(" [over {budget}s budget]") };
        println!(
            "criterion {id:>2} {}: {name}: {} ({secs:.1}s){timing}",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 14 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
