use agrisense::bench::{bench_model, compare, WindowClassifier};
use agrisense::domain::{DailyWindow, Rootstock, Treatment};
use agrisense::learn::{fit_flat, fit_hierarchical, FlatModel, HierarchicalConfig, Level1Kind, Level2Kind};
use agrisense::preprocess::{preprocess, PreprocessConfig};
use agrisense::synth::{gen_soil, SynthConfig};
use chrono::NaiveDate;

fn data(plants: usize, days: u64) -> (Vec<DailyWindow>, Vec<Treatment>) {
    let start = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
    let cfg = SynthConfig {
        n_plants_per_cell: plants,
        start_date: start,
        end_date: start + chrono::Days::new(days),
        ..SynthConfig::for_rootstock(Rootstock::Thomas, 8)
    };
    let (readings, metas) = gen_soil(&cfg).unwrap();
    let (windows, _) = preprocess(&readings, &PreprocessConfig::default()).unwrap();
    let labels = windows
        .iter()
        .map(|w| metas.iter().find(|m| m.plant_id == w.plant_id).unwrap().treatment)
        .collect();
    (windows, labels)
}

fn config() -> HierarchicalConfig {
    let mut cfg = HierarchicalConfig {
        level1: Level1Kind::Logistic,
        ..HierarchicalConfig::default()
    };
    cfg.forest.n_trees = 20;
    cfg
}

fn flat(kind: Level2Kind, windows: &[DailyWindow], labels: &[Treatment]) -> FlatModel<f64> {
    fit_flat(windows, labels, kind, &config()).unwrap()
}

#[test]
fn doubling_windows_at_most_doubles_wall_time() {
    let (windows, labels) = data(2, 20);
    let model = fit_hierarchical::<f64>(&windows, &labels, &config()).unwrap();
    let mut doubled = windows.clone();
    doubled.extend(windows.iter().cloned());
    let one = bench_model(&model, &windows, 10).unwrap();
    let two = bench_model(&model, &doubled, 10).unwrap();
    assert!(
        two.wall_mean_s <= 2.0 * one.wall_mean_s * 1.25,
        "{} s vs {} s",
        two.wall_mean_s,
        one.wall_mean_s
    );
}

#[test]
fn knn_latency_grows_with_training_size_and_forest_does_not() {
    let (small_w, small_y) = data(1, 10);
    let (large_w, large_y) = data(8, 20);
    let queries = &small_w;
    let latency = |m: &dyn WindowClassifier| bench_model(m, queries, 10).unwrap().per_window_latency_s;
    let knn_small = latency(&flat(Level2Kind::Knn, &small_w, &small_y));
    let knn_large = latency(&flat(Level2Kind::Knn, &large_w, &large_y));
    let forest_small = latency(&flat(Level2Kind::Forest, &small_w, &small_y));
    let forest_large = latency(&flat(Level2Kind::Forest, &large_w, &large_y));
    // 16x the training rows
    assert!(knn_large > 4.0 * knn_small, "knn {knn_small} -> {knn_large}");
    assert!(forest_large < 2.5 * forest_small, "forest {forest_small} -> {forest_large}");
}

#[test]
fn benchmarking_leaves_predictions_unchanged() {
    let (windows, labels) = data(1, 10);
    let model = fit_hierarchical::<f64>(&windows, &labels, &config()).unwrap();
    let before = model.classify(&windows).unwrap();
    let report = bench_model(&model, &windows, 3).unwrap();
    assert_eq!(model.classify(&windows).unwrap(), before);
    assert!(report.hashes_identical);
    assert!(report.wall_min_s <= report.wall_mean_s && report.wall_mean_s <= report.wall_max_s);
    let forest = flat(Level2Kind::Forest, &windows, &labels);
    let rows = compare(&[report, bench_model(&forest, &windows, 3).unwrap()]).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].per_window_latency_s <= rows[1].per_window_latency_s);
}
