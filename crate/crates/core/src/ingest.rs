//! Loading actuals and forecasts, hourly resampling, deviation panels and
//! the non-anticipative history window.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::NUM_LAGS;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unit {unit}: hour {hour} has no samples")]
    EmptyHour { unit: String, hour: NaiveDateTime },
    #[error("unit {unit}: timestamp {at} is out of order")]
    Unsorted { unit: String, at: NaiveDateTime },
    #[error("unit {unit}: duplicate timestamp {at} (DST fold or repeated row)")]
    DuplicateTimestamp { unit: String, at: NaiveDateTime },
    #[error("unit {unit}: non-finite value at {at}")]
    NonFinite { unit: String, at: NaiveDateTime },
    #[error("unit {unit}: value {value} at {at} outside [0, {capacity}]")]
    OutsideCapacity {
        unit: String,
        at: NaiveDateTime,
        value: f64,
        capacity: f64,
    },
    #[error("no complete day shared by actuals and forecasts")]
    NoOverlap,
    #[error("unit {unit} missing from {source_kind}")]
    UnitMismatch { unit: String, source_kind: String },
    #[error("day {0} is not in the panel")]
    MissingDay(NaiveDate),
    #[error("history window for {target}: {found} days, need {required}")]
    InsufficientHistory {
        target: NaiveDate,
        found: usize,
        required: usize,
    },
    #[error("bad timestamp {0:?}")]
    BadTimestamp(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One observation of a unit's power (MW).
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    pub unit_id: String,
    pub timestamp: NaiveDateTime,
    pub value: f64,
}

impl SeriesRecord {
    pub fn new(unit_id: impl Into<String>, timestamp: NaiveDateTime, value: f64) -> Self {
        Self {
            unit_id: unit_id.into(),
            timestamp,
            value,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    unit_id: String,
    timestamp: String,
    value: f64,
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime, IngestError> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .map_err(|_| IngestError::BadTimestamp(s.to_string()))
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Read a `unit_id,timestamp,value` file.
pub fn read_series_csv(path: &Path) -> Result<Vec<SeriesRecord>, IngestError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row?;
        let timestamp = parse_timestamp(&row.timestamp)?;
        if !row.value.is_finite() {
            return Err(IngestError::NonFinite {
                unit: row.unit_id,
                at: timestamp,
            });
        }
        out.push(SeriesRecord {
            unit_id: row.unit_id,
            timestamp,
            value: row.value,
        });
    }
    Ok(out)
}

pub fn write_series_csv(path: &Path, records: &[SeriesRecord]) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path)?;
    for r in records {
        writer.serialize(CsvRow {
            unit_id: r.unit_id.clone(),
            timestamp: format_timestamp(&r.timestamp),
            value: r.value,
        })?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CapacityRow {
    unit_id: String,
    capacity_mw: f64,
}

/// Read the optional `unit_id,capacity_mw` sidecar.
pub fn read_capacity_csv(path: &Path) -> Result<BTreeMap<String, f64>, IngestError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for row in reader.deserialize::<CapacityRow>() {
        let row = row?;
        out.insert(row.unit_id, row.capacity_mw);
    }
    Ok(out)
}

/// Check `0 <= value <= capacity` for every unit that has a capacity.
pub fn check_capacity(
    records: &[SeriesRecord],
    capacities: &BTreeMap<String, f64>,
) -> Result<(), IngestError> {
    const SLACK: f64 = 1e-9;
    for r in records {
        if let Some(&cap) = capacities.get(&r.unit_id) {
            if r.value < -SLACK || r.value > cap + SLACK {
                return Err(IngestError::OutsideCapacity {
                    unit: r.unit_id.clone(),
                    at: r.timestamp,
                    value: r.value,
                    capacity: cap,
                });
            }
        }
    }
    Ok(())
}

/// What to do with an hour that has no samples inside a unit's span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Fail with [`IngestError::EmptyHour`].
    #[default]
    Reject,
    /// Leave the hour out; the day is later dropped from the panel.
    Skip,
}

fn truncate_to_hour(t: &NaiveDateTime) -> NaiveDateTime {
    t.date().and_hms_opt(t.hour(), 0, 0).expect("valid hour")
}

/// Average sub-hourly samples into one record per (unit, hour).
///
/// Within a unit, timestamps must be strictly increasing. Output is ordered
/// by unit id, then time.
pub fn resample_hourly(
    records: &[SeriesRecord],
    gaps: GapPolicy,
) -> Result<Vec<SeriesRecord>, IngestError> {
    let mut by_unit: BTreeMap<&str, Vec<&SeriesRecord>> = BTreeMap::new();
    for r in records {
        by_unit.entry(r.unit_id.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (unit, rows) in by_unit {
        let mut prev: Option<NaiveDateTime> = None;
        let mut current: Option<(NaiveDateTime, f64, usize)> = None;
        let mut hourly: Vec<SeriesRecord> = Vec::new();
        for r in rows {
            if !r.value.is_finite() {
                return Err(IngestError::NonFinite {
                    unit: unit.to_string(),
                    at: r.timestamp,
                });
            }
            if let Some(p) = prev {
                if r.timestamp == p {
                    return Err(IngestError::DuplicateTimestamp {
                        unit: unit.to_string(),
                        at: r.timestamp,
                    });
                }
                if r.timestamp < p {
                    return Err(IngestError::Unsorted {
                        unit: unit.to_string(),
                        at: r.timestamp,
                    });
                }
            }
            prev = Some(r.timestamp);
            let hour = truncate_to_hour(&r.timestamp);
            match current.as_mut() {
                Some((h, sum, count)) if *h == hour => {
                    *sum += r.value;
                    *count += 1;
                }
                _ => {
                    if let Some((h, sum, count)) = current.take() {
                        hourly.push(SeriesRecord::new(unit, h, sum / count as f64));
                    }
                    current = Some((hour, r.value, 1));
                }
            }
        }
        if let Some((h, sum, count)) = current {
            hourly.push(SeriesRecord::new(unit, h, sum / count as f64));
        }
        if gaps == GapPolicy::Reject {
            for pair in hourly.windows(2) {
                let expected = pair[0].timestamp + Duration::hours(1);
                if pair[1].timestamp != expected {
                    return Err(IngestError::EmptyHour {
                        unit: unit.to_string(),
                        hour: expected,
                    });
                }
            }
        }
        out.extend(hourly);
    }
    Ok(out)
}

/// Hourly values keyed by (unit, date), one slot per lag.
#[derive(Debug, Clone, Default)]
pub struct HourlyTable {
    cells: BTreeMap<(String, NaiveDate), [Option<f64>; NUM_LAGS]>,
}

impl HourlyTable {
    pub fn from_records(records: &[SeriesRecord]) -> Self {
        let mut cells: BTreeMap<(String, NaiveDate), [Option<f64>; NUM_LAGS]> = BTreeMap::new();
        for r in records {
            let slot = cells
                .entry((r.unit_id.clone(), r.timestamp.date()))
                .or_insert([None; NUM_LAGS]);
            slot[r.timestamp.hour() as usize] = Some(r.value);
        }
        Self { cells }
    }

    pub fn has_unit(&self, unit: &str) -> bool {
        self.cells.keys().any(|(u, _)| u == unit)
    }

    pub fn dates(&self) -> BTreeSet<NaiveDate> {
        self.cells.keys().map(|(_, d)| *d).collect()
    }

    /// All 24 values for a unit and day, or `None` if any hour is missing.
    pub fn day(&self, unit: &str, date: NaiveDate) -> Option<[f64; NUM_LAGS]> {
        let slot = self.cells.get(&(unit.to_string(), date))?;
        let mut out = [0.0; NUM_LAGS];
        for (o, v) in out.iter_mut().zip(slot.iter()) {
            *o = (*v)?;
        }
        Some(out)
    }

    /// `units × 24` matrix for one day.
    pub fn day_matrix(&self, units: &[String], date: NaiveDate) -> Option<Matrix> {
        let mut m = Matrix::zeros(units.len(), NUM_LAGS);
        for (i, u) in units.iter().enumerate() {
            let row = self.day(u, date)?;
            for (l, v) in row.iter().enumerate() {
                m[(i, l)] = *v;
            }
        }
        Some(m)
    }
}

/// Deviations `actual − forecast` arranged as (unit, lag, day).
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationPanel {
    pub units: Vec<String>,
    pub days: Vec<NaiveDate>,
    /// Days seen in either source but dropped for missing cells.
    pub dropped_days: Vec<NaiveDate>,
    deviations: Vec<f64>,
    forecasts: Vec<f64>,
}

impl DeviationPanel {
    /// Build a panel from per-day `units × 24` deviation and forecast matrices.
    pub fn from_day_matrices(
        units: Vec<String>,
        days: Vec<NaiveDate>,
        deviations: &[Matrix],
        forecasts: &[Matrix],
    ) -> Self {
        let p = units.len();
        let mut dev = Vec::with_capacity(days.len() * p * NUM_LAGS);
        let mut fc = Vec::with_capacity(days.len() * p * NUM_LAGS);
        for (dm, fm) in deviations.iter().zip(forecasts) {
            for u in 0..p {
                for l in 0..NUM_LAGS {
                    dev.push(dm[(u, l)]);
                    fc.push(fm[(u, l)]);
                }
            }
        }
        assert_eq!(dev.len(), days.len() * p * NUM_LAGS, "panel shape");
        Self {
            units,
            days,
            dropped_days: Vec::new(),
            deviations: dev,
            forecasts: fc,
        }
    }

    fn idx(&self, unit: usize, lag: usize, day: usize) -> usize {
        (day * self.units.len() + unit) * NUM_LAGS + lag
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn num_days(&self) -> usize {
        self.days.len()
    }

    pub fn unit_index(&self, unit: &str) -> Option<usize> {
        self.units.iter().position(|u| u == unit)
    }

    pub fn deviation(&self, unit: usize, lag: usize, day: usize) -> f64 {
        self.deviations[self.idx(unit, lag, day)]
    }

    pub fn forecast(&self, unit: usize, lag: usize, day: usize) -> f64 {
        self.forecasts[self.idx(unit, lag, day)]
    }

    pub fn actual(&self, unit: usize, lag: usize, day: usize) -> f64 {
        self.deviation(unit, lag, day) + self.forecast(unit, lag, day)
    }

    /// Deviation time series of one (unit, lag) across days.
    pub fn series(&self, unit: usize, lag: usize) -> Vec<f64> {
        (0..self.num_days())
            .map(|d| self.deviation(unit, lag, d))
            .collect()
    }

    pub fn forecast_series(&self, unit: usize, lag: usize) -> Vec<f64> {
        (0..self.num_days())
            .map(|d| self.forecast(unit, lag, d))
            .collect()
    }

    pub fn deviation_matrix(&self, day: usize) -> Matrix {
        Matrix::from_fn(self.num_units(), NUM_LAGS, |u, l| self.deviation(u, l, day))
    }

    pub fn forecast_matrix(&self, day: usize) -> Matrix {
        Matrix::from_fn(self.num_units(), NUM_LAGS, |u, l| self.forecast(u, l, day))
    }

    /// Sub-panel over the given days, in the given order.
    pub fn restrict_days(&self, days: &[NaiveDate]) -> Result<DeviationPanel, IngestError> {
        let lookup: BTreeMap<NaiveDate, usize> =
            self.days.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let mut devs = Vec::with_capacity(days.len());
        let mut fcs = Vec::with_capacity(days.len());
        for d in days {
            let i = *lookup.get(d).ok_or(IngestError::MissingDay(*d))?;
            devs.push(self.deviation_matrix(i));
            fcs.push(self.forecast_matrix(i));
        }
        Ok(DeviationPanel::from_day_matrices(
            self.units.clone(),
            days.to_vec(),
            &devs,
            &fcs,
        ))
    }
}

/// Build the deviation panel of `units` from hourly actuals and forecasts.
///
/// Days where any (unit, hour) cell is missing from either source are
/// dropped and listed in [`DeviationPanel::dropped_days`].
pub fn compute_deviations(
    actuals: &[SeriesRecord],
    forecasts: &[SeriesRecord],
    units: &[String],
) -> Result<DeviationPanel, IngestError> {
    let act = HourlyTable::from_records(actuals);
    let fc = HourlyTable::from_records(forecasts);
    for u in units {
        if !act.has_unit(u) {
            return Err(IngestError::UnitMismatch {
                unit: u.clone(),
                source_kind: "actuals".into(),
            });
        }
        if !fc.has_unit(u) {
            return Err(IngestError::UnitMismatch {
                unit: u.clone(),
                source_kind: "forecasts".into(),
            });
        }
    }
    let all_dates: BTreeSet<NaiveDate> = act.dates().union(&fc.dates()).cloned().collect();
    let mut days = Vec::new();
    let mut dropped = Vec::new();
    let mut devs = Vec::new();
    let mut fcs = Vec::new();
    for date in all_dates {
        match (act.day_matrix(units, date), fc.day_matrix(units, date)) {
            (Some(a), Some(f)) => {
                devs.push(&a - &f);
                fcs.push(f);
                days.push(date);
            }
            _ => dropped.push(date),
        }
    }
    if days.is_empty() {
        return Err(IngestError::NoOverlap);
    }
    if !dropped.is_empty() {
        log::info!(
            "dropped {} incomplete day(s), first {}",
            dropped.len(),
            dropped[0]
        );
    }
    let mut panel = DeviationPanel::from_day_matrices(units.to_vec(), days, &devs, &fcs);
    panel.dropped_days = dropped;
    Ok(panel)
}

/// History days used to fit the model for `target_day`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayWindow {
    pub target_day: NaiveDate,
    pub history_days: Vec<NaiveDate>,
    pub half_width: u32,
    /// Set when the window reaches past `target_day` (early-year fallback).
    pub in_sample: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryPolicy {
    pub min_days: usize,
    pub allow_in_sample: bool,
}

impl Default for HistoryPolicy {
    fn default() -> Self {
        Self {
            min_days: 60,
            allow_in_sample: true,
        }
    }
}

/// Same month/day one year earlier; Feb 29 maps to Feb 28.
pub fn anniversary(day: NaiveDate) -> NaiveDate {
    let year = day.year() - 1;
    NaiveDate::from_ymd_opt(year, day.month(), day.day())
        .or_else(|| NaiveDate::from_ymd_opt(year, day.month(), day.day() - 1))
        .expect("anniversary date")
}

/// The `n` days before `target_day` plus the `2n + 1` days centred on its
/// anniversary one year earlier, intersected with `available`.
///
/// When that leaves fewer than `policy.min_days` days and no prior-year day
/// is available, falls back to `target_day ± n` (excluding the target) and
/// flags the window as in-sample.
pub fn select_history(
    target_day: NaiveDate,
    available: &BTreeSet<NaiveDate>,
    n: u32,
    policy: HistoryPolicy,
) -> Result<DayWindow, IngestError> {
    assert!(n >= 1, "half width must be at least one day");
    let n_days = Duration::days(n as i64);
    let mut chosen: BTreeSet<NaiveDate> = available
        .range((target_day - n_days)..target_day)
        .cloned()
        .collect();
    let anchor = anniversary(target_day);
    // The prior year counts as observed only if some day up to the
    // anniversary is; days after it may belong to the target's own year.
    let prior_available = available.range((anchor - n_days)..=anchor).next().is_some();
    if prior_available {
        chosen.extend(
            available
                .range((anchor - n_days)..=(anchor + n_days))
                .filter(|d| **d != target_day),
        );
    }

    if chosen.len() >= policy.min_days {
        return Ok(DayWindow {
            target_day,
            history_days: chosen.into_iter().collect(),
            half_width: n,
            in_sample: false,
        });
    }
    if prior_available || !policy.allow_in_sample {
        return Err(IngestError::InsufficientHistory {
            target: target_day,
            found: chosen.len(),
            required: policy.min_days,
        });
    }
    let fallback: Vec<NaiveDate> = available
        .range((target_day - n_days)..=(target_day + n_days))
        .cloned()
        .filter(|d| *d != target_day)
        .collect();
    if fallback.len() < policy.min_days {
        return Err(IngestError::InsufficientHistory {
            target: target_day,
            found: fallback.len(),
            required: policy.min_days,
        });
    }
    log::warn!("history for {target_day} falls back to an in-sample window");
    Ok(DayWindow {
        target_day,
        history_days: fallback,
        half_width: n,
        in_sample: true,
    })
}
