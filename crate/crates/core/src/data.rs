//! CSV time series, event labels, lagged feature windows and chronological
//! splits.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeatureMatrix;
use crate::series::LabelSeries;

/// How to read a time-series CSV. Loaded from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub timestamp_column: String,
    /// Numeric columns to load; all non-timestamp columns when absent.
    #[serde(default)]
    pub columns: Option<Vec<String>>,
    #[serde(default = "default_missing_markers")]
    pub missing_markers: Vec<String>,
    /// `chrono` format string; common ISO 8601 shapes are detected when absent.
    /// Naive timestamps are taken as UTC.
    #[serde(default)]
    pub timestamp_format: Option<String>,
}

fn default_missing_markers() -> Vec<String> {
    ["", "NA", "N/A", "NaN", "nan", "null"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl CsvSchema {
    pub fn new(timestamp_column: impl Into<String>) -> Self {
        Self {
            timestamp_column: timestamp_column.into(),
            columns: None,
            missing_markers: default_missing_markers(),
            timestamp_format: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn parse_timestamp(s: &str, format: Option<&str>) -> std::result::Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Some(fmt) = format {
        if let Ok(dt) = DateTime::parse_from_str(s, fmt) {
            return Ok(dt.with_timezone(&Utc));
        }
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt.and_utc());
        }
        return NaiveDate::parse_from_str(s, fmt)
            .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
            .map_err(|e| format!("timestamp '{s}' does not match '{fmt}': {e}"));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        .map_err(|_| format!("unrecognized timestamp '{s}'"))
}

/// Named numeric columns over strictly increasing UTC timestamps; `None`
/// marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    timestamps: Vec<DateTime<Utc>>,
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl TimeSeriesTable {
    pub fn new(
        timestamps: Vec<DateTime<Utc>>,
        names: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        Error::check_aligned("column names", names.len(), columns.len())?;
        for c in &columns {
            Error::check_aligned("table column", timestamps.len(), c.len())?;
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Ordering { row: i + 1 });
        }
        Ok(Self {
            timestamps,
            names,
            columns,
        })
    }

    pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, schema)
    }

    /// Parses CSV text. Error rows are 1-based file lines (the header is
    /// line 1).
    pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = r.headers()?.clone();
        let find = |name: &str| {
            header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                row: 1,
                column: name.to_string(),
                message: "column not found in header".into(),
            })
        };
        let ts_col = find(&schema.timestamp_column)?;
        let names: Vec<String> = match &schema.columns {
            Some(cols) => cols.clone(),
            None => header
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != ts_col)
                .map(|(_, h)| h.to_string())
                .collect(),
        };
        let positions = names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

        let mut timestamps = Vec::new();
        let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let field = |pos: usize| rec.get(pos).unwrap_or("");
            let ts = parse_timestamp(field(ts_col), schema.timestamp_format.as_deref()).map_err(
                |message| Error::Parse {
                    row: line,
                    column: schema.timestamp_column.clone(),
                    message,
                },
            )?;
            if timestamps.last().is_some_and(|prev| ts <= *prev) {
                return Err(Error::Ordering { row: line });
            }
            timestamps.push(ts);
            for ((name, &pos), col) in names.iter().zip(&positions).zip(columns.iter_mut()) {
                let cell = field(pos);
                if schema.missing_markers.iter().any(|m| m == cell) {
                    col.push(None);
                    continue;
                }
                let v: f64 = cell.parse().map_err(|e| Error::Parse {
                    row: line,
                    column: name.clone(),
                    message: format!("'{cell}': {e}"),
                })?;
                col.push(if v.is_finite() { Some(v) } else { None });
            }
        }
        Self::new(timestamps, names, columns)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Missing(format!("column '{name}'")))
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().flatten().filter(|v| v.is_none()).count()
    }
}

/// Daily closing prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<DateTime<Utc>>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<DateTime<Utc>>, closes: Vec<f64>) -> Result<Self> {
        Error::check_aligned("price dates", dates.len(), closes.len())?;
        if let Some((i, p)) = closes
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(Error::domain(format!("price {p} at index {i} is not positive")));
        }
        if let Some(i) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Ordering { row: i + 1 });
        }
        Ok(Self { dates, closes })
    }

    /// Prices on consecutive synthetic days starting at 2000-01-01.
    pub fn from_closes(closes: Vec<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
            .and_utc();
        let dates = (0..closes.len())
            .map(|d| start + chrono::Duration::days(d as i64))
            .collect();
        Self::new(dates, closes)
    }

    pub fn from_table(table: &TimeSeriesTable, column: &str) -> Result<Self> {
        let closes = table
            .column(column)?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Error::Missing(format!("price '{column}' at data row {}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(table.timestamps().to_vec(), closes)
    }

    pub fn dates(&self) -> &[DateTime<Utc>] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        Self::new(
            self.dates[range.clone()].to_vec(),
            self.closes[range].to_vec(),
        )
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.dates.clone(), self.closes.iter().map(|p| p * c).collect())
    }
}

/// `100 * (P[d] - P[d-1]) / P[d-1]` for `d = 1..n`; entry `j` belongs to day
/// `j + 1`.
pub fn daily_percentage_change(prices: &PriceSeries) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::domain("percentage change needs at least two prices"));
    }
    Ok(prices
        .closes
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0] * 100.0)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelRule {
    /// Label at `t` is 1 iff `column[t + horizon] > threshold`.
    ExceedsThreshold {
        column: String,
        threshold: f64,
        horizon: usize,
    },
    /// Label is 1 iff the percentage change is strictly below `limit`.
    DownMovement { limit: f64 },
}

impl LabelRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            LabelRule::ExceedsThreshold {
                threshold, horizon, ..
            } => {
                if *horizon == 0 {
                    return Err(Error::domain("label horizon must be at least 1"));
                }
                if !threshold.is_finite() {
                    return Err(Error::domain("exceedance threshold must be finite"));
                }
            }
            LabelRule::DownMovement { limit } => {
                if !limit.is_finite() {
                    return Err(Error::domain("down-movement limit must be finite"));
                }
            }
        }
        Ok(())
    }
}

pub enum LabelSource<'a> {
    Table(&'a TimeSeriesTable),
    Changes(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub labels: LabelSeries,
    /// Trailing time steps with no label because the horizon runs past the
    /// end of the series.
    pub dropped_tail: usize,
}

pub fn make_labels(source: LabelSource<'_>, rule: &LabelRule) -> Result<Labels> {
    rule.validate()?;
    match (source, rule) {
        (LabelSource::Changes(eta), LabelRule::DownMovement { limit }) => Ok(Labels {
            labels: LabelSeries::from_bools(eta.iter().map(|&e| e < *limit).collect())?,
            dropped_tail: 0,
        }),
        (
            LabelSource::Table(table),
            LabelRule::ExceedsThreshold {
                column,
                threshold,
                horizon,
            },
        ) => {
            let target = table.column(column)?;
            let kept = target.len().saturating_sub(*horizon);
            if kept == 0 {
                return Err(Error::domain(format!(
                    "horizon {horizon} leaves no labels in a series of {} steps",
                    target.len()
                )));
            }
            let values = (0..kept)
                .map(|t| {
                    target[t + horizon].map(|v| v > *threshold).ok_or_else(|| {
                        Error::Missing(format!("'{column}' at data row {}", t + horizon + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Labels {
                labels: LabelSeries::from_bools(values)?,
                dropped_tail: *horizon,
            })
        }
        _ => Err(Error::domain(
            "label rule does not apply to this input (exceedance needs a table, down movement needs percentage changes)",
        )),
    }
}

/// Lagged feature rows with the time index each row ends at.
#[derive(Debug, Clone, PartialEq)]
pub struct Windowed {
    pub features: FeatureMatrix,
    /// Row `r` holds observations `end_index[r] - lookback + 1 ..= end_index[r]`.
    pub end_index: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Complete-length windows skipped because they contain a missing cell.
    pub dropped: usize,
}

/// Row for time `t` concatenates, per column, the `lookback` most recent
/// values ending at `t` (oldest first). Windows with a missing cell are
/// dropped.
pub fn windowed_features(
    table: &TimeSeriesTable,
    lookback: usize,
    feature_columns: &[String],
) -> Result<Windowed> {
    if lookback == 0 {
        return Err(Error::domain("lookback must be at least 1"));
    }
    if feature_columns.is_empty() {
        return Err(Error::domain("no feature columns given"));
    }
    let cols = feature_columns
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>>>()?;
    let n = table.len();
    if n < lookback {
        return Err(Error::domain(format!(
            "{n} rows are not enough for a lookback of {lookback}"
        )));
    }
    let mut data = Vec::new();
    let mut end_index = Vec::new();
    let mut dropped = 0;
    for t in lookback - 1..n {
        let start = t + 1 - lookback;
        if cols.iter().any(|c| c[start..=t].iter().any(Option::is_none)) {
            dropped += 1;
            continue;
        }
        for c in &cols {
            data.extend(c[start..=t].iter().map(|v| v.unwrap()));
        }
        end_index.push(t);
    }
    if end_index.is_empty() {
        return Err(Error::domain("no complete feature window"));
    }
    let feature_names = feature_columns
        .iter()
        .flat_map(|c| (0..lookback).rev().map(move |lag| format!("{c}_lag{lag}")))
        .collect();
    Ok(Windowed {
        features: FeatureMatrix::new(end_index.len(), cols.len() * lookback, data)?,
        end_index,
        feature_names,
        dropped,
    })
}

/// Contiguous, ordered train/validation/test index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

impl SplitIndices {
    fn checked(train: Range<usize>, valid: Range<usize>, test: Range<usize>) -> Result<Self> {
        for (segment, r) in [("train", &train), ("valid", &valid), ("test", &test)] {
            if r.is_empty() {
                return Err(Error::Split { segment });
            }
        }
        Ok(Self { train, valid, test })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitBoundaries {
    /// Train is the first `round(f1 * n)` rows, validation runs to
    /// `round(f2 * n)`, test is the rest.
    Fractions(f64, f64),
    /// Train is before the first instant, validation before the second.
    Times(DateTime<Utc>, DateTime<Utc>),
}

pub fn split_by_fraction(n: usize, f1: f64, f2: f64) -> Result<SplitIndices> {
    if !(0.0 < f1 && f1 < f2 && f2 < 1.0) {
        return Err(Error::domain(format!(
            "split fractions ({f1}, {f2}) must satisfy 0 < f1 < f2 < 1"
        )));
    }
    let a = (f1 * n as f64).round() as usize;
    let b = (f2 * n as f64).round() as usize;
    SplitIndices::checked(0..a, a..b, b..n)
}

pub fn split_by_time(
    timestamps: &[DateTime<Utc>],
    valid_start: DateTime<Utc>,
    test_start: DateTime<Utc>,
) -> Result<SplitIndices> {
    if valid_start >= test_start {
        return Err(Error::domain("validation start must precede test start"));
    }
    let a = timestamps.partition_point(|t| *t < valid_start);
    let b = timestamps.partition_point(|t| *t < test_start);
    SplitIndices::checked(0..a, a..b, b..timestamps.len())
}

pub fn chronological_split(
    n: usize,
    boundaries: &SplitBoundaries,
    timestamps: Option<&[DateTime<Utc>]>,
) -> Result<SplitIndices> {
    match boundaries {
        SplitBoundaries::Fractions(f1, f2) => split_by_fraction(n, *f1, *f2),
        SplitBoundaries::Times(t1, t2) => {
            let ts = timestamps
                .ok_or_else(|| Error::Missing("timestamps for a date-based split".into()))?;
            Error::check_aligned("split timestamps", n, ts.len())?;
            split_by_time(ts, *t1, *t2)
        }
    }
}

/// Per-feature mean and standard deviation, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant columns get a unit scale.
    pub fn fit(x: &FeatureMatrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::domain("cannot fit standardization on zero rows"));
        }
        let n = x.rows() as f64;
        let mut mean = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        Error::check_aligned("standardized features", self.mean.len(), x.cols())?;
        let mut out = x.clone();
        let cols = x.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % cols;
            *v = (*v - self.mean[c]) / self.std[c];
        }
        Ok(out)
    }
}

/// Feature rows paired with labels of a later time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: LabelSeries,
    pub feature_names: Vec<String>,
    /// Index, in the source series, of the time step each label describes.
    pub target_index: Vec<usize>,
    pub timestamps: Vec<DateTime<Utc>>,
    pub dropped_windows: usize,
    pub dropped_tail: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        let idx: Vec<usize> = range.clone().collect();
        Ok(Self {
            features: self.features.select_rows(&idx),
            labels: self.labels.select(&idx)?,
            feature_names: self.feature_names.clone(),
            target_index: self.target_index[range.clone()].to_vec(),
            timestamps: self.timestamps[range].to_vec(),
            dropped_windows: 0,
            dropped_tail: 0,
        })
    }

    /// CSV with columns `index,timestamp,target_index,<features>,label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string(), "timestamp".into(), "target_index".into()];
        header.extend(self.feature_names.iter().cloned());
        header.push("label".into());
        w.write_record(&header)?;
        for r in 0..self.len() {
            let mut rec = vec![
                r.to_string(),
                self.timestamps[r].to_rfc3339(),
                self.target_index[r].to_string(),
            ];
            rec.extend(self.features.row(r).iter().map(|v| v.to_string()));
            rec.push(u8::from(self.labels[r]).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = r.headers()?.clone();
        let expect = ["index", "timestamp", "target_index"];
        if header.len() < 5 || (0..3).any(|i| &header[i] != expect[i]) || &header[header.len() - 1] != "label" {
            return Err(Error::Parse {
                row: 1,
                column: "*".into(),
                message: "expected header index,timestamp,target_index,<features...>,label".into(),
            });
        }
        let n_feat = header.len() - 4;
        let feature_names: Vec<String> = (3..3 + n_feat).map(|i| header[i].to_string()).collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut target_index = Vec::new();
        let mut timestamps = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let err = |c: usize, message: String| Error::Parse {
                row: line,
                column: header.get(c).unwrap_or("*").to_string(),
                message,
            };
            timestamps.push(parse_timestamp(&rec[1], None).map_err(|m| err(1, m))?);
            target_index.push(rec[2].parse::<usize>().map_err(|e| err(2, e.to_string()))?);
            let row = (3..3 + n_feat)
                .map(|c| rec[c].parse::<f64>().map_err(|e| err(c, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
            let c = header.len() - 1;
            labels.push(rec[c].parse::<u8>().map_err(|e| err(c, e.to_string()))?);
        }
        Ok(Self {
            features: FeatureMatrix::from_rows(&rows)?,
            labels: LabelSeries::new(labels)?,
            feature_names,
            target_index,
            timestamps,
            dropped_windows: 0,
            dropped_tail: 0,
        })
    }
}

/// Windows over `feature_columns` ending at `t`, labeled by whether `target`
/// exceeds `threshold` at `t + horizon`. Rows with a missing feature or
/// target are dropped.
pub fn build_exceedance_dataset(
    table: &TimeSeriesTable,
    feature_columns: &[String],
    lookback: usize,
    target: &str,
    threshold: f64,
    horizon: usize,
) -> Result<Dataset> {
    LabelRule::ExceedsThreshold {
        column: target.to_string(),
        threshold,
        horizon,
    }
    .validate()?;
    let win = windowed_features(table, lookback, feature_columns)?;
    let target_col = table.column(target)?;
    let mut keep = Vec::new();
    let mut labels = Vec::new();
    let mut dropped_tail = 0;
    let mut dropped_windows = win.dropped;
    for (r, &t) in win.end_index.iter().enumerate() {
        match target_col.get(t + horizon) {
            None => dropped_tail += 1,
            Some(None) => dropped_windows += 1,
            Some(Some(v)) => {
                keep.push(r);
                labels.push(*v > threshold);
            }
        }
    }
    if keep.is_empty() {
        return Err(Error::domain("no labeled feature window"));
    }
    let ts = table.timestamps();
    Ok(Dataset {
        features: win.features.select_rows(&keep),
        labels: LabelSeries::from_bools(labels)?,
        feature_names: win.feature_names,
        target_index: keep.iter().map(|&r| win.end_index[r] + horizon).collect(),
        timestamps: keep.iter().map(|&r| ts[win.end_index[r]]).collect(),
        dropped_windows,
        dropped_tail,
    })
}

/// `lookback` days of percentage change ending at day `d`, labeled by
/// whether day `d + 1` is a down movement (`change < limit`). `target_index`
/// refers to price days.
pub fn build_down_movement_dataset(
    prices: &PriceSeries,
    lookback: usize,
    limit: f64,
) -> Result<Dataset> {
    let eta = daily_percentage_change(prices)?;
    let down = make_labels(LabelSource::Changes(&eta), &LabelRule::DownMovement { limit })?;
    let table = TimeSeriesTable::new(
        prices.dates()[1..].to_vec(),
        vec!["pct_change".into()],
        vec![eta.iter().map(|&v| Some(v)).collect()],
    )?;
    let win = windowed_features(&table, lookback, &["pct_change".to_string()])?;
    // change j belongs to price day j + 1
    let keep: Vec<usize> = (0..win.end_index.len())
        .filter(|&r| win.end_index[r] + 1 < eta.len())
        .collect();
    if keep.is_empty() {
        return Err(Error::domain("price series too short for one labeled window"));
    }
    let labels = keep.iter().map(|&r| down.labels[win.end_index[r] + 1]).collect();
    Ok(Dataset {
        features: win.features.select_rows(&keep),
        labels: LabelSeries::from_bools(labels)?,
        feature_names: win.feature_names,
        target_index: keep.iter().map(|&r| win.end_index[r] + 2).collect(),
        timestamps: keep.iter().map(|&r| prices.dates()[win.end_index[r] + 1]).collect(),
        dropped_windows: win.dropped,
        dropped_tail: win.end_index.len() - keep.len(),
    })
}
