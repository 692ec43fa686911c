//! Raw readings to complete, smoothed daily windows.
//!
//! Per plant: snap readings onto the 30-minute lattice covering whole local
//! days, fill interior gaps by linear interpolation and boundary gaps by
//! holding the nearest real value, smooth each channel with a trailing
//! moving average, then cut into 48-slot days. Days that were mostly
//! interpolated are dropped.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{DailyWindow, SoilReading, SLOTS_PER_DAY};
use crate::error::{Error, Result};
use crate::ingest::local_date;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Seconds between grid slots.
    pub grid_step: i64,
    pub smoothing_window: usize,
    pub max_missing_fraction_per_day: f64,
    /// Fixed offset used to assign calendar days.
    pub utc_offset_secs: i32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            grid_step: 1800,
            smoothing_window: 20,
            max_missing_fraction_per_day: 0.5,
            utc_offset_secs: 0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_step <= 0 || 86_400 % self.grid_step != 0 {
            return Err(Error::Config(format!("grid_step {} must divide a day", self.grid_step)));
        }
        if 86_400 / self.grid_step != SLOTS_PER_DAY as i64 {
            return Err(Error::Config(format!(
                "grid_step {} does not give {SLOTS_PER_DAY} slots per day",
                self.grid_step
            )));
        }
        if self.smoothing_window == 0 {
            return Err(Error::Config("smoothing_window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_missing_fraction_per_day) {
            return Err(Error::Config("max_missing_fraction_per_day must be in [0, 1]".into()));
        }
        if i64::from(self.utc_offset_secs) % self.grid_step != 0 {
            return Err(Error::Config("utc_offset_secs must be a multiple of grid_step".into()));
        }
        Ok(())
    }
}

/// One plant's readings on a gap-free lattice spanning whole days.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    pub plant_id: String,
    pub first_day: NaiveDate,
    /// `[moisture, ec]` per slot.
    pub values: Vec<[f64; 2]>,
    /// Whether a real reading landed in the slot.
    pub observed: Vec<bool>,
}

/// Snaps one plant's readings onto the grid and fills the gaps.
///
/// Returns `None` when fewer than two readings are available.
pub fn regrid_interpolate(readings: &[SoilReading], cfg: &PreprocessConfig) -> Option<GridSeries> {
    if readings.len() < 2 {
        return None;
    }
    let offset = i64::from(cfg.utc_offset_secs);
    let step = cfg.grid_step;
    let first_day = local_date(readings[0].timestamp, cfg.utc_offset_secs);
    let last_day = local_date(readings[readings.len() - 1].timestamp, cfg.utc_offset_secs);
    // Local midnight of the first day, in UTC seconds.
    let origin = first_day.and_hms_opt(0, 0, 0)?.and_utc().timestamp() - offset;
    let n_days = (last_day - first_day).num_days() as usize + 1;
    let n_slots = n_days * SLOTS_PER_DAY;

    let mut slots: Vec<Option<[f64; 2]>> = vec![None; n_slots];
    for r in readings {
        let k = ((r.timestamp - origin) as f64 / step as f64).round();
        if k < 0.0 || k as usize >= n_slots {
            continue;
        }
        let k = k as usize;
        if slots[k].is_none() {
            slots[k] = Some([r.moisture, r.ec]);
        }
    }
    let observed: Vec<bool> = slots.iter().map(Option::is_some).collect();
    let known: Vec<usize> = (0..n_slots).filter(|&k| observed[k]).collect();
    if known.len() < 2 {
        return None;
    }

    let mut values = vec![[0.0; 2]; n_slots];
    let (first, last) = (known[0], known[known.len() - 1]);
    let at = |k: usize| slots[k].expect("observed slot");
    for v in values.iter_mut().take(first) {
        *v = at(first);
    }
    for v in values.iter_mut().skip(last + 1) {
        *v = at(last);
    }
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (at(a), at(b));
        values[a] = va;
        for (k, v) in values.iter_mut().enumerate().take(b).skip(a + 1) {
            let frac = (k - a) as f64 / (b - a) as f64;
            *v = [va[0] + frac * (vb[0] - va[0]), va[1] + frac * (vb[1] - va[1])];
        }
    }
    values[last] = at(last);

    Some(GridSeries {
        plant_id: readings[0].plant_id.clone(),
        first_day,
        values,
        observed,
    })
}

/// Trailing moving average: `out[i]` is the mean of `x[max(0, i−w+1) ..= i]`.
pub fn moving_average<T: Scalar>(series: &[T], w: usize) -> Result<Vec<T>> {
    if w == 0 {
        return Err(Error::argument("moving average window must be >= 1"));
    }
    let mut out = Vec::with_capacity(series.len());
    for i in 0..series.len() {
        let lo = (i + 1).saturating_sub(w);
        let win = &series[lo..=i];
        let mean = win.iter().copied().sum::<T>() / T::of_usize(win.len());
        let (mn, mx) = win
            .iter()
            .fold((win[0], win[0]), |(a, b), &v| (a.min(v), b.max(v)));
        out.push(mean.max(mn).min(mx));
    }
    Ok(out)
}

/// Counts of what preprocessing discarded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub plants_in: usize,
    pub plants_skipped: Vec<String>,
    pub days_total: usize,
    pub days_dropped: usize,
    pub windows_emitted: usize,
}

/// Cuts a smoothed grid series into daily windows.
///
/// Returns the windows and the number of days dropped for exceeding the
/// missing-data threshold.
pub fn windowize(series: &GridSeries, cfg: &PreprocessConfig) -> Result<(Vec<DailyWindow>, usize)> {
    let n_days = series.values.len() / SLOTS_PER_DAY;
    let mut out = Vec::with_capacity(n_days);
    let mut dropped = 0;
    for day in 0..n_days {
        let span = day * SLOTS_PER_DAY..(day + 1) * SLOTS_PER_DAY;
        let missing = series.observed[span.clone()].iter().filter(|o| !**o).count();
        if missing as f64 / SLOTS_PER_DAY as f64 > cfg.max_missing_fraction_per_day {
            dropped += 1;
            continue;
        }
        let date = series.first_day + chrono::Duration::days(day as i64);
        out.push(DailyWindow::new(series.plant_id.clone(), date, series.values[span].to_vec())?);
    }
    Ok((out, dropped))
}

/// Full preprocessing of one plant: regrid, interpolate, smooth, windowize.
pub fn preprocess_plant(readings: &[SoilReading], cfg: &PreprocessConfig) -> Result<Option<(Vec<DailyWindow>, usize, usize)>> {
    let Some(mut series) = regrid_interpolate(readings, cfg) else {
        return Ok(None);
    };
    for c in 0..2 {
        let channel: Vec<f64> = series.values.iter().map(|v| v[c]).collect();
        let smooth = moving_average(&channel, cfg.smoothing_window)?;
        for (v, s) in series.values.iter_mut().zip(smooth) {
            v[c] = s;
        }
    }
    let n_days = series.values.len() / SLOTS_PER_DAY;
    let (windows, dropped) = windowize(&series, cfg)?;
    Ok(Some((windows, dropped, n_days)))
}

/// Preprocesses readings of any number of plants.
///
/// Input must be sorted by `(plant_id, timestamp)` and deduplicated; the
/// output is sorted by `(plant_id, date)`.
pub fn preprocess(readings: &[SoilReading], cfg: &PreprocessConfig) -> Result<(Vec<DailyWindow>, DropReport)> {
    cfg.validate()?;
    let mut by_plant: BTreeMap<&str, Vec<SoilReading>> = BTreeMap::new();
    for r in readings {
        by_plant.entry(r.plant_id.as_str()).or_default().push(r.clone());
    }
    let mut report = DropReport {
        plants_in: by_plant.len(),
        ..DropReport::default()
    };
    let mut windows = Vec::new();
    for (pid, mut rs) in by_plant {
        rs.sort_by_key(|r| r.timestamp);
        match preprocess_plant(&rs, cfg)? {
            Some((ws, dropped, days)) => {
                report.days_total += days;
                report.days_dropped += dropped;
                windows.extend(ws);
            }
            None => {
                log::warn!("plant {pid}: fewer than two readings, skipped");
                report.plants_skipped.push(pid.to_string());
            }
        }
    }
    report.windows_emitted = windows.len();
    Ok((windows, report))
}
