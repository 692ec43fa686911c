//! Inference benchmarking: wall time, per-window latency, process CPU
//! utilization and peak resident memory over repeated full-test-set runs.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{DailyWindow, SLOTS_PER_DAY};
use crate::error::{Error, Result};
use crate::learn::{FlatModel, HierarchicalModel};
use crate::rng::fnv1a;
use crate::scalar::Scalar;

/// Default number of timed repeats.
pub const DEFAULT_REPEATS: usize = 20;
/// Coefficient of variation above which a run is flagged unstable.
pub const UNSTABLE_CV: f64 = 0.20;

/// Anything that maps whole windows to class indices.
pub trait WindowClassifier {
    fn descriptor(&self) -> String;

    fn classify(&self, windows: &[DailyWindow]) -> Result<Vec<usize>>;
}

impl<T: Scalar> WindowClassifier for HierarchicalModel<T> {
    fn descriptor(&self) -> String {
        self.config.descriptor()
    }

    fn classify(&self, windows: &[DailyWindow]) -> Result<Vec<usize>> {
        Ok(self.predict(windows).into_iter().map(|p| p.treatment.index()).collect())
    }
}

impl<T: Scalar> WindowClassifier for FlatModel<T> {
    fn descriptor(&self) -> String {
        FlatModel::descriptor(self)
    }

    fn classify(&self, windows: &[DailyWindow]) -> Result<Vec<usize>> {
        Ok(self.predict(windows).into_iter().map(|t| t.index()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub n_windows: usize,
    /// `[length, channels]` of each input window.
    pub window_shape: [usize; 2],
    pub repeats: usize,
    pub threads: usize,
    pub wall_mean_s: f64,
    pub wall_min_s: f64,
    pub wall_max_s: f64,
    pub wall_std_s: f64,
    /// Coefficient of variation of the wall time.
    pub wall_cv: f64,
    pub unstable: bool,
    pub per_window_latency_s: f64,
    /// Process CPU time over wall time, in percent; `None` if unavailable.
    pub cpu_utilization_percent: Option<f64>,
    pub peak_memory_bytes: Option<u64>,
    pub peak_memory_source: String,
    pub power: String,
    /// FNV-1a of the predictions of the first timed run.
    pub prediction_hash: String,
    pub hashes_identical: bool,
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn prediction_hash(pred: &[usize]) -> String {
    let bytes: Vec<u8> = pred.iter().flat_map(|p| (*p as u64).to_le_bytes()).collect();
    format!("{:016x}", fnv1a(&bytes))
}

/// User plus system CPU time of this process, in seconds.
fn process_cpu_seconds() -> Option<f64> {
    let mut usage = std::mem::MaybeUninit::<libc::rusage>::uninit();
    // SAFETY: getrusage fills the struct on success and we only read it then.
    let rc = unsafe { libc::getrusage(libc::RUSAGE_SELF, usage.as_mut_ptr()) };
    if rc != 0 {
        return None;
    }
    // SAFETY: rc == 0 means the struct was initialized.
    let u = unsafe { usage.assume_init() };
    let secs = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 * 1e-6;
    Some(secs(u.ru_utime) + secs(u.ru_stime))
}

/// Peak resident set size from procfs, in bytes.
fn peak_rss() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Resets the kernel's peak-RSS counter for this process (Linux ≥ 4.0).
fn reset_peak_rss() -> bool {
    std::fs::write("/proc/self/clear_refs", "5").is_ok()
}

fn stats(samples: &[f64]) -> (f64, f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, min, max, var.sqrt())
}

/// Runs full-set inference once untimed, then `repeats` timed times on
/// the calling thread. Aborts if any run fails.
pub fn bench_model<M: WindowClassifier + ?Sized>(model: &M, windows: &[DailyWindow], repeats: usize) -> Result<BenchReport> {
    if windows.is_empty() {
        return Err(Error::argument("benchmark needs at least one window"));
    }
    if repeats == 0 {
        return Err(Error::argument("benchmark needs at least one repeat"));
    }
    let reset = reset_peak_rss();
    let warm = model.classify(windows)?;
    let reference = prediction_hash(&warm);
    let mut walls = Vec::with_capacity(repeats);
    let mut identical = true;
    let cpu0 = process_cpu_seconds();
    let t_all = Instant::now();
    for _ in 0..repeats {
        let t = Instant::now();
        let pred = model.classify(windows)?;
        walls.push(t.elapsed().as_secs_f64());
        identical &= prediction_hash(&pred) == reference;
    }
    let elapsed = t_all.elapsed().as_secs_f64();
    let cpu = match (cpu0, process_cpu_seconds()) {
        (Some(a), Some(b)) if elapsed > 0.0 => Some(100.0 * (b - a) / elapsed),
        _ => None,
    };
    let peak = peak_rss();
    let source = match (peak, reset) {
        (None, _) => "unavailable",
        (Some(_), true) => "procfs VmHWM, reset before run",
        (Some(_), false) => "procfs VmHWM, process lifetime",
    };
    let (mean, min, max, std) = stats(&walls);
    let cv = if mean > 0.0 { std / mean } else { 0.0 };
    Ok(BenchReport {
        model: model.descriptor(),
        n_windows: windows.len(),
        window_shape: [SLOTS_PER_DAY, 2],
        repeats,
        threads: 1,
        wall_mean_s: mean,
        wall_min_s: min,
        wall_max_s: max,
        wall_std_s: std,
        wall_cv: cv,
        unstable: cv > UNSTABLE_CV,
        per_window_latency_s: mean / windows.len() as f64,
        cpu_utilization_percent: cpu,
        peak_memory_bytes: peak,
        peak_memory_source: source.into(),
        power: "not measured".into(),
        prediction_hash: reference,
        hashes_identical: identical,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub rank: usize,
    pub model: String,
    pub n_windows: usize,
    pub per_window_latency_s: f64,
    pub wall_mean_s: f64,
    pub wall_cv: f64,
    pub cpu_utilization_percent: Option<f64>,
    pub peak_memory_bytes: Option<u64>,
}

/// Reports ordered by per-window latency, fastest first.
pub fn compare(reports: &[BenchReport]) -> Result<Vec<RankingRow>> {
    if reports.len() < 2 {
        return Err(Error::argument("comparison needs at least two reports"));
    }
    let mut sorted: Vec<&BenchReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.per_window_latency_s.total_cmp(&b.per_window_latency_s).then(a.model.cmp(&b.model)));
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, r)| RankingRow {
            rank: i + 1,
            model: r.model.clone(),
            n_windows: r.n_windows,
            per_window_latency_s: r.per_window_latency_s,
            wall_mean_s: r.wall_mean_s,
            wall_cv: r.wall_cv,
            cpu_utilization_percent: r.cpu_utilization_percent,
            peak_memory_bytes: r.peak_memory_bytes,
        })
        .collect())
}

/// Missing measurements are written as `unavailable`.
pub fn write_ranking_csv<W: Write>(out: W, rows: &[RankingRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "rank",
        "model",
        "n_windows",
        "per_window_latency_s",
        "wall_mean_s",
        "wall_cv",
        "cpu_utilization_percent",
        "peak_memory_bytes",
    ])?;
    let or_na = |v: Option<String>| v.unwrap_or_else(|| "unavailable".into());
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.model.clone(),
            r.n_windows.to_string(),
            r.per_window_latency_s.to_string(),
            r.wall_mean_s.to_string(),
            r.wall_cv.to_string(),
            or_na(r.cpu_utilization_percent.map(|v| v.to_string())),
            or_na(r.peak_memory_bytes.map(|v| v.to_string())),
        ])?;
    }
    w.flush()?;
    Ok(())
}
