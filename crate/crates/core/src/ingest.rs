//! Raw CSV ingestion and validation.
//!
//! Formats (comma separated, `\n` line endings, `.` decimal separator):
//!
//! * soil: `timestamp,plant_id,moisture,ec` with ISO-8601 UTC timestamps
//! * spectral: `session_date,plant_id,leaf_id,r0,...,r287`
//! * labels: `plant_id,rootstock,treatment`
//! * windows: `plant_id,date,slot,moisture,ec`

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::domain::{
    DailyWindow, PlantMeta, Rootstock, SoilReading, SpectralSample, Treatment, SLOTS_PER_DAY,
    SPECTRAL_CHANNELS,
};
use crate::error::{Error, Result};

pub const SOIL_HEADER: [&str; 4] = ["timestamp", "plant_id", "moisture", "ec"];
pub const LABELS_HEADER: [&str; 3] = ["plant_id", "rootstock", "treatment"];
pub const WINDOWS_HEADER: [&str; 5] = ["plant_id", "date", "slot", "moisture", "ec"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected_out_of_range: usize,
    pub rejected_malformed: usize,
    pub duplicates_dropped: usize,
}

impl IngestReport {
    pub fn input_rows(&self) -> usize {
        self.accepted + self.rejected_out_of_range + self.rejected_malformed + self.duplicates_dropped
    }
}

/// Nominal sensor ranges; bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RangeSpec {
    pub moisture_min: f64,
    pub moisture_max: f64,
    pub ec_min: f64,
    pub ec_max: f64,
}

impl Default for RangeSpec {
    fn default() -> Self {
        Self {
            moisture_min: 0.0,
            moisture_max: 100.0,
            ec_min: 0.0,
            ec_max: 20_000.0,
        }
    }
}

impl RangeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.moisture_min < self.moisture_max && self.ec_min < self.ec_max) {
            return Err(Error::Config("range spec needs min < max on both channels".into()));
        }
        Ok(())
    }

    pub fn contains(&self, r: &SoilReading) -> bool {
        (self.moisture_min..=self.moisture_max).contains(&r.moisture) && (self.ec_min..=self.ec_max).contains(&r.ec)
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str], what: &str) -> Result<()> {
    let got: Vec<&str> = found.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Format(format!(
            "{what} CSV header must be `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

/// Parses an ISO-8601 timestamp (`2024-01-01T00:30:00Z`) or bare epoch seconds.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    s.parse::<i64>().ok()
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Format(format!("bad date `{s}`: {e}")))
}

/// Calendar date of `ts` in a fixed offset from UTC.
pub fn local_date(ts: i64, utc_offset_secs: i32) -> NaiveDate {
    let shifted = ts + i64::from(utc_offset_secs);
    DateTime::from_timestamp(shifted.div_euclid(86_400) * 86_400, 0)
        .expect("timestamp in range")
        .date_naive()
}

fn sort_readings(readings: &mut [SoilReading]) {
    readings.sort_by(|a, b| a.plant_id.cmp(&b.plant_id).then(a.timestamp.cmp(&b.timestamp)));
}

/// Parses a soil CSV. Unparseable rows are counted, not fatal.
pub fn parse_soil_csv<R: Read>(input: R) -> Result<(Vec<SoilReading>, IngestReport)> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, &SOIL_HEADER, "soil")?;
    let mut report = IngestReport::default();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if !e.is_io_error() => {
                report.rejected_malformed += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let parsed = (row.len() == 4)
            .then(|| {
                Some(SoilReading {
                    timestamp: parse_timestamp(&row[0])?,
                    plant_id: Some(row[1].to_string()).filter(|s| !s.is_empty())?,
                    moisture: row[2].parse().ok()?,
                    ec: row[3].parse().ok()?,
                })
            })
            .flatten()
            .filter(SoilReading::is_valid);
        match parsed {
            Some(r) => out.push(r),
            None => report.rejected_malformed += 1,
        }
    }
    sort_readings(&mut out);
    report.accepted = out.len();
    Ok((out, report))
}

/// Keeps the first reading per `(plant_id, timestamp)`; input must be sorted.
pub fn dedup(mut readings: Vec<SoilReading>) -> (Vec<SoilReading>, usize) {
    let before = readings.len();
    readings.dedup_by(|b, a| a.plant_id == b.plant_id && a.timestamp == b.timestamp);
    let dropped = before - readings.len();
    (readings, dropped)
}

pub fn range_filter(readings: Vec<SoilReading>, spec: &RangeSpec) -> (Vec<SoilReading>, usize) {
    let before = readings.len();
    let kept: Vec<SoilReading> = readings.into_iter().filter(|r| spec.contains(r)).collect();
    let rejected = before - kept.len();
    (kept, rejected)
}

/// Parse, deduplicate and range-check a soil CSV in one pass.
pub fn ingest_soil<R: Read>(input: R, spec: &RangeSpec) -> Result<(Vec<SoilReading>, IngestReport)> {
    spec.validate()?;
    let (readings, mut report) = parse_soil_csv(input)?;
    let (readings, dups) = dedup(readings);
    let (readings, out_of_range) = range_filter(readings, spec);
    report.duplicates_dropped = dups;
    report.rejected_out_of_range = out_of_range;
    report.accepted = readings.len();
    Ok((readings, report))
}

/// Splits readings into half-open periods `[b_i, b_{i+1})` by local date.
pub fn slice_periods(
    readings: &[SoilReading],
    boundaries: &[NaiveDate],
    utc_offset_secs: i32,
) -> Result<Vec<Vec<SoilReading>>> {
    if boundaries.len() < 2 {
        return Err(Error::argument("need at least two period boundaries"));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::argument("period boundaries must be strictly increasing"));
    }
    let mut periods = vec![Vec::new(); boundaries.len() - 1];
    for r in readings {
        let d = local_date(r.timestamp, utc_offset_secs);
        // index of the last boundary <= d
        let idx = boundaries.partition_point(|b| *b <= d);
        if idx >= 1 && idx < boundaries.len() {
            periods[idx - 1].push(r.clone());
        }
    }
    Ok(periods)
}

/// Parses a spectral CSV; rows need exactly 288 reflectance columns.
pub fn parse_spectral_csv<R: Read>(input: R) -> Result<(Vec<SpectralSample>, IngestReport)> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    let expected: Vec<String> = ["session_date", "plant_id", "leaf_id"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..SPECTRAL_CHANNELS).map(|i| format!("r{i}")))
        .collect();
    let expected_ref: Vec<&str> = expected.iter().map(String::as_str).collect();
    check_header(&header, &expected_ref, "spectral")?;

    let mut report = IngestReport::default();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if !e.is_io_error() => {
                report.rejected_malformed += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if row.len() != 3 + SPECTRAL_CHANNELS {
            report.rejected_malformed += 1;
            continue;
        }
        let head = (
            parse_date(&row[0]).ok(),
            Some(row[1].to_string()).filter(|s| !s.is_empty()),
            row[2].parse::<u32>().ok(),
        );
        let values: Option<Vec<f64>> = (3..row.len()).map(|i| row[i].parse::<f64>().ok()).collect();
        match (head, values) {
            ((Some(date), Some(pid), Some(leaf)), Some(values)) => {
                if values.iter().any(|v| !v.is_finite()) {
                    report.rejected_malformed += 1;
                } else if values.iter().any(|v| *v < 0.0) {
                    report.rejected_out_of_range += 1;
                } else {
                    out.push(SpectralSample {
                        plant_id: pid,
                        session_date: date,
                        leaf_id: leaf,
                        reflectance: values,
                    });
                }
            }
            _ => report.rejected_malformed += 1,
        }
    }
    sort_spectra(&mut out);
    report.accepted = out.len();
    Ok((out, report))
}

pub fn sort_spectra(samples: &mut [SpectralSample]) {
    samples.sort_by(|a, b| {
        a.plant_id
            .cmp(&b.plant_id)
            .then(a.session_date.cmp(&b.session_date))
            .then(a.leaf_id.cmp(&b.leaf_id))
    });
}

pub fn parse_labels_csv<R: Read>(input: R) -> Result<Vec<PlantMeta>> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, &LABELS_HEADER, "labels")?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != 3 {
            return Err(Error::Format(format!("labels row {} has {} fields", i + 1, row.len())));
        }
        out.push(PlantMeta {
            plant_id: row[0].to_string(),
            rootstock: row[1].parse::<Rootstock>()?,
            treatment: row[2].parse::<Treatment>()?,
        });
    }
    Ok(out)
}

/// Records that belong to a plant.
pub trait PlantRecord {
    fn plant_id(&self) -> &str;
}

impl PlantRecord for SoilReading {
    fn plant_id(&self) -> &str {
        &self.plant_id
    }
}

impl PlantRecord for SpectralSample {
    fn plant_id(&self) -> &str {
        &self.plant_id
    }
}

impl PlantRecord for DailyWindow {
    fn plant_id(&self) -> &str {
        &self.plant_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeled<T> {
    pub record: T,
    pub rootstock: Rootstock,
    pub treatment: Treatment,
}

/// Lookup table from plant id to metadata; duplicate ids are rejected.
pub fn label_index(metas: &[PlantMeta]) -> Result<HashMap<&str, &PlantMeta>> {
    let mut index = HashMap::with_capacity(metas.len());
    for m in metas {
        if index.insert(m.plant_id.as_str(), m).is_some() {
            return Err(Error::domain(format!("duplicate plant_id `{}` in labels", m.plant_id)));
        }
    }
    Ok(index)
}

/// Attaches rootstock/treatment to each record; unknown plants are dropped
/// and counted.
pub fn join_labels<T: PlantRecord>(records: Vec<T>, metas: &[PlantMeta]) -> Result<(Vec<Labeled<T>>, usize)> {
    let index = label_index(metas)?;
    let mut dropped = 0;
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        match index.get(record.plant_id()) {
            Some(m) => out.push(Labeled {
                rootstock: m.rootstock,
                treatment: m.treatment,
                record,
            }),
            None => dropped += 1,
        }
    }
    Ok((out, dropped))
}

pub fn write_soil_csv<W: Write>(out: W, readings: &[SoilReading]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(SOIL_HEADER)?;
    for r in readings {
        w.write_record([
            format_timestamp(r.timestamp),
            r.plant_id.clone(),
            r.moisture.to_string(),
            r.ec.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectral_csv<W: Write>(out: W, samples: &[SpectralSample]) -> Result<()> {
    let mut w = writer(out);
    let mut header = vec!["session_date".to_string(), "plant_id".into(), "leaf_id".into()];
    header.extend((0..SPECTRAL_CHANNELS).map(|i| format!("r{i}")));
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.session_date.to_string(), s.plant_id.clone(), s.leaf_id.to_string()];
        row.extend(s.reflectance.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv<W: Write>(out: W, metas: &[PlantMeta]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(LABELS_HEADER)?;
    for m in metas {
        w.write_record([m.plant_id.as_str(), m.rootstock.as_str(), m.treatment.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_windows_csv<W: Write>(out: W, windows: &[DailyWindow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(WINDOWS_HEADER)?;
    for win in windows {
        for (slot, row) in win.rows().iter().enumerate() {
            w.write_record([
                win.plant_id.clone(),
                win.date.to_string(),
                slot.to_string(),
                row[0].to_string(),
                row[1].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a windows CSV back into [`DailyWindow`]s.
///
/// A file without one of the soil channels is a domain error: downstream
/// models cannot be applied to it.
pub fn parse_windows_csv<R: Read>(input: R) -> Result<Vec<DailyWindow>> {
    let mut rdr = reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    for ch in ["moisture", "ec"] {
        if !header.iter().any(|h| h == ch) {
            return Err(Error::domain(format!("window data lacks the `{ch}` channel")));
        }
    }
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    if header_ref != WINDOWS_HEADER {
        return Err(Error::Format(format!(
            "windows CSV header must be `{}`, found `{}`",
            WINDOWS_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut grouped: BTreeMap<(String, NaiveDate), Vec<Option<[f64; 2]>>> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = || Error::Format(format!("windows row {} is malformed", i + 1));
        if row.len() != 5 {
            return Err(bad());
        }
        let date = parse_date(&row[1])?;
        let slot: usize = row[2].parse().map_err(|_| bad())?;
        let m: f64 = row[3].parse().map_err(|_| bad())?;
        let e: f64 = row[4].parse().map_err(|_| bad())?;
        if slot >= SLOTS_PER_DAY {
            return Err(bad());
        }
        let entry = grouped
            .entry((row[0].to_string(), date))
            .or_insert_with(|| vec![None; SLOTS_PER_DAY]);
        entry[slot] = Some([m, e]);
    }
    grouped
        .into_iter()
        .map(|((pid, date), slots)| {
            let values: Option<Vec<[f64; 2]>> = slots.into_iter().collect();
            let values = values.ok_or_else(|| Error::Format(format!("window {pid} {date} is incomplete")))?;
            DailyWindow::new(pid, date, values)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "timestamp,plant_id,moisture,ec\n";

    fn reading(pid: &str, ts: i64, m: f64) -> SoilReading {
        SoilReading {
            timestamp: ts,
            plant_id: pid.into(),
            moisture: m,
            ec: 500.0,
        }
    }

    #[test]
    fn parses_valid_rows() {
        let csv = format!(
            "{HEADER}2024-01-01T00:30:00Z,T-02,30.5,800\n2024-01-01T00:00:00Z,T-02,31,801\n2024-01-01T00:00:00Z,T-01,29,790\n"
        );
        let (rows, report) = parse_soil_csv(csv.as_bytes()).unwrap();
        assert_eq!(report.accepted, 3);
        assert_eq!(report.input_rows(), 3);
        assert_eq!(rows[0].plant_id, "T-01");
        assert!(rows[1].timestamp < rows[2].timestamp);
    }

    #[test]
    fn malformed_rows_are_counted() {
        let csv = format!("{HEADER}2024-01-01T00:00:00Z,T-01,abc,800\n2024-01-01T00:00:00Z,T-01,30,800\nnot-a-time,T-01,1,2\n1,2\n");
        let (rows, report) = parse_soil_csv(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(report.rejected_malformed, 3);
        assert_eq!(report.input_rows(), 4);
    }

    #[test]
    fn header_only_and_bad_header() {
        let (rows, report) = parse_soil_csv(HEADER.as_bytes()).unwrap();
        assert!(rows.is_empty());
        assert_eq!(report, IngestReport::default());
        assert!(matches!(parse_soil_csv("time,plant,m,ec\n".as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn dedup_examples() {
        let (out, dropped) = dedup(vec![reading("T-01", 10, 1.0), reading("T-01", 10, 2.0)]);
        assert_eq!((out.len(), dropped), (1, 1));
        assert_eq!(out[0].moisture, 1.0);
        let (out, dropped) = dedup(vec![reading("T-01", 10, 1.0), reading("T-01", 20, 2.0)]);
        assert_eq!((out.len(), dropped), (2, 0));
        let (out, dropped) = dedup(vec![reading("T-01", 10, 1.0), reading("T-02", 10, 2.0)]);
        assert_eq!((out.len(), dropped), (2, 0));
    }

    #[test]
    fn range_filter_bounds_are_inclusive() {
        let spec = RangeSpec::default();
        let mut neg = reading("T-01", 3, 50.0);
        neg.ec = -5.0;
        let (out, rejected) = range_filter(vec![reading("T-01", 1, 101.0), reading("T-01", 2, 100.0), neg], &spec);
        assert_eq!(rejected, 2);
        assert_eq!(out[0].moisture, 100.0);
    }

    #[test]
    fn ingest_report_conserves_rows() {
        let csv = format!(
            "{HEADER}2024-01-01T00:00:00Z,T-01,30,800\n2024-01-01T00:00:00Z,T-01,31,800\n2024-01-01T00:30:00Z,T-01,130,800\nx,T-01,1,1\n"
        );
        let (rows, report) = ingest_soil(csv.as_bytes(), &RangeSpec::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(report.input_rows(), 4);
        assert_eq!((report.duplicates_dropped, report.rejected_out_of_range, report.rejected_malformed), (1, 1, 1));
    }

    #[test]
    fn period_slicing_is_half_open() {
        let d = |m, day| NaiveDate::from_ymd_opt(2024, m, day).unwrap();
        let ts = |date: NaiveDate| date.and_hms_opt(12, 0, 0).unwrap().and_utc().timestamp();
        let rs = vec![
            reading("T-01", ts(d(1, 1)), 1.0),
            reading("T-01", ts(d(2, 1)), 2.0),
            reading("T-01", ts(d(2, 15)), 3.0),
            reading("T-01", ts(d(3, 1)), 4.0),
        ];
        let periods = slice_periods(&rs, &[d(1, 15), d(2, 1), d(3, 1)], 0).unwrap();
        assert_eq!(periods.len(), 2);
        assert!(periods[0].is_empty());
        assert_eq!(periods[1].len(), 2);
        assert!(slice_periods(&rs, &[d(2, 1), d(1, 1)], 0).is_err());
        let paper_like = slice_periods(&rs, &[d(1, 1), d(2, 1), d(2, 15), d(3, 2)], 0).unwrap();
        assert_eq!(paper_like.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 1, 2]);
    }

    #[test]
    fn spectral_rows_validated() {
        let mut header = "session_date,plant_id,leaf_id".to_string();
        for i in 0..SPECTRAL_CHANNELS {
            header.push_str(&format!(",r{i}"));
        }
        let good = format!("2024-04-12,T-01,1{}", ",0.25".repeat(288));
        let short = format!("2024-04-12,T-02,1{}", ",0.25".repeat(287));
        let negative = format!("2024-04-12,T-03,1,-0.1{}", ",0.25".repeat(287));
        let csv = format!("{header}\n{good}\n{short}\n{negative}\n");
        let (samples, report) = parse_spectral_csv(csv.as_bytes()).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(report.rejected_malformed, 1);
        assert_eq!(report.rejected_out_of_range, 1);
        assert!(parse_spectral_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn labels_join() {
        let metas = vec![PlantMeta {
            plant_id: "T-03".into(),
            rootstock: Rootstock::Thomas,
            treatment: Treatment::PRR,
        }];
        let (labeled, dropped) = join_labels(vec![reading("T-03", 1, 1.0), reading("X-9", 1, 1.0)], &metas).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(labeled[0].treatment, Treatment::PRR);
        let dup = vec![metas[0].clone(), metas[0].clone()];
        assert!(join_labels(vec![reading("T-03", 1, 1.0)], &dup).is_err());
    }

    #[test]
    fn windows_round_trip_and_missing_channel() {
        let d = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
        let w = DailyWindow::new("T-01", d, (0..48).map(|i| [i as f64, 2.0 * i as f64]).collect()).unwrap();
        let mut buf = Vec::new();
        write_windows_csv(&mut buf, std::slice::from_ref(&w)).unwrap();
        assert_eq!(parse_windows_csv(buf.as_slice()).unwrap(), vec![w]);
        let no_ec = "plant_id,date,slot,moisture\nT-01,2024-03-01,0,1\n";
        assert!(matches!(parse_windows_csv(no_ec.as_bytes()), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn dedup_and_filter_are_idempotent(
            rows in proptest::collection::vec((0u8..3, 0i64..20, -10.0f64..120.0), 0..60)
        ) {
            let mut readings: Vec<SoilReading> = rows
                .into_iter()
                .map(|(p, t, m)| reading(&format!("T-0{p}"), t + 1, m))
                .collect();
            sort_readings(&mut readings);
            let n = readings.len();
            let (once, d1) = dedup(readings);
            let (twice, d2) = dedup(once.clone());
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(d2, 0);
            let spec = RangeSpec::default();
            let (f1, r1) = range_filter(once, &spec);
            let (f2, r2) = range_filter(f1.clone(), &spec);
            prop_assert_eq!(&f1, &f2);
            prop_assert_eq!(r2, 0);
            prop_assert_eq!(f1.len() + r1 + d1, n);
        }
    }
}
