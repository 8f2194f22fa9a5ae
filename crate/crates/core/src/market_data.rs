//! Daily OHLC ingestion and preprocessing.
//!
//! Every forecaster in this crate works on the mid-price `(high + low) / 2`.
//! The open and close columns are kept on each bar so a canonical series file
//! round-trips the source data.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trailing windows used for rolling mid-price statistics unless configured otherwise.
pub const DEFAULT_FEATURE_WINDOWS: [usize; 3] = [3, 7, 30];

/// Standard deviations below this are treated as degenerate and replaced by 1.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl OhlcBar {
    pub fn mid(&self) -> f64 {
        (self.high + self.low) / 2.0
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("{name} must be a finite positive price, got {v}"));
            }
        }
        if self.low > self.high {
            return Err(format!("low {} exceeds high {}", self.low, self.high));
        }
        Ok(())
    }
}

/// A dated bar sequence for one symbol, strictly increasing by date, with
/// its mid-price column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesDoc", into = "SeriesDoc")]
pub struct PriceSeries {
    symbol: String,
    bars: Vec<OhlcBar>,
    mid: Vec<f64>,
}

impl PriceSeries {
    pub fn new(symbol: impl Into<String>, bars: Vec<OhlcBar>) -> Result<Self> {
        if bars.is_empty() {
            return Err(Error::Empty("price series has no bars".into()));
        }
        for (i, bar) in bars.iter().enumerate() {
            bar.validate().map_err(|reason| Error::InvalidRow {
                row: i as u64 + 1,
                reason,
            })?;
            if i > 0 && bars[i - 1].date >= bar.date {
                return Err(Error::InvalidRow {
                    row: i as u64 + 1,
                    reason: format!("date {} is not after {}", bar.date, bars[i - 1].date),
                });
            }
        }
        let mid = bars.iter().map(OhlcBar::mid).collect();
        Ok(PriceSeries {
            symbol: symbol.into(),
            bars,
            mid,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn bars(&self) -> &[OhlcBar] {
        &self.bars
    }

    pub fn mid(&self) -> &[f64] {
        &self.mid
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.bars.iter().map(|b| b.date)
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// Reads either a canonical JSON series (`.json`) or an OHLC CSV.
    pub fn read_path(path: &Path, symbol: &str) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::File {
            path: path.to_owned(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            let series: PriceSeries = serde_json::from_slice(&bytes)?;
            if series.symbol != symbol {
                return Err(Error::invalid(format!(
                    "{} holds symbol {}, expected {symbol}",
                    path.display(),
                    series.symbol
                )));
            }
            Ok(series)
        } else {
            load_series(bytes.as_slice(), symbol)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SeriesDoc {
    symbol: String,
    bars: Vec<BarDoc>,
}

#[derive(Serialize, Deserialize)]
struct BarDoc {
    date: NaiveDate,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    mid: f64,
}

impl From<PriceSeries> for SeriesDoc {
    fn from(series: PriceSeries) -> Self {
        let bars = series
            .bars
            .iter()
            .zip(&series.mid)
            .map(|(b, &mid)| BarDoc {
                date: b.date,
                open: b.open,
                high: b.high,
                low: b.low,
                close: b.close,
                mid,
            })
            .collect();
        SeriesDoc {
            symbol: series.symbol,
            bars,
        }
    }
}

impl TryFrom<SeriesDoc> for PriceSeries {
    type Error = Error;

    fn try_from(doc: SeriesDoc) -> Result<Self> {
        let bars: Vec<OhlcBar> = doc
            .bars
            .iter()
            .map(|b| OhlcBar {
                date: b.date,
                open: b.open,
                high: b.high,
                low: b.low,
                close: b.close,
            })
            .collect();
        let series = PriceSeries::new(doc.symbol, bars)?;
        for (i, (b, &mid)) in doc.bars.iter().zip(&series.mid).enumerate() {
            if b.mid != mid {
                return Err(Error::InvalidRow {
                    row: i as u64 + 1,
                    reason: format!("stored mid {} differs from (high+low)/2 = {mid}", b.mid),
                });
            }
        }
        Ok(series)
    }
}

const REQUIRED_COLUMNS: [&str; 5] = ["date", "open", "high", "low", "close"];

fn parse_price(field: &str, name: &str, row: u64) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty()
        || field.eq_ignore_ascii_case("nan")
        || field.eq_ignore_ascii_case("na")
        || field.eq_ignore_ascii_case("null")
    {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|_| Error::InvalidRow {
        row,
        reason: format!("cannot parse {name} value `{field}`"),
    })
}

/// Parses a headered OHLC CSV into a sorted series.
///
/// Column names are matched case-insensitively in any order. Missing price
/// fields are forward-filled from the previous bar; rows that are missing a
/// field before any complete bar has been seen are dropped. Row numbers in
/// errors are file line numbers.
pub fn load_series<R: Read>(csv_text: R, symbol: &str) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_text);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Empty("CSV has no header row".into()));
    }
    let index: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_ascii_lowercase(), i))
        .collect();
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = *index.get(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    struct RawRow {
        line: u64,
        date: NaiveDate,
        prices: [Option<f64>; 4],
    }

    let mut raw = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(cols[i]).unwrap_or("");
        let date_text = field(0);
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|_| Error::InvalidRow {
            row: line,
            reason: format!("cannot parse date `{date_text}`"),
        })?;
        let mut prices = [None; 4];
        for (k, slot) in prices.iter_mut().enumerate() {
            *slot = parse_price(field(k + 1), REQUIRED_COLUMNS[k + 1], line)?;
        }
        raw.push(RawRow { line, date, prices });
    }
    if raw.is_empty() {
        return Err(Error::Empty("CSV has no data rows".into()));
    }
    raw.sort_by_key(|r| r.date);

    let mut bars: Vec<OhlcBar> = Vec::with_capacity(raw.len());
    let mut prev_date: Option<(NaiveDate, u64)> = None;
    for row in &raw {
        if let Some((d, prev_line)) = prev_date {
            if d == row.date {
                return Err(Error::InvalidRow {
                    row: row.line,
                    reason: format!("duplicate date {} (also on line {prev_line})", row.date),
                });
            }
        }
        prev_date = Some((row.date, row.line));

        let mut filled = [0.0; 4];
        let mut complete = true;
        for (k, value) in row.prices.iter().enumerate() {
            match (value, bars.last()) {
                (Some(v), _) => filled[k] = *v,
                (None, Some(last)) => {
                    filled[k] = [last.open, last.high, last.low, last.close][k];
                }
                (None, None) => complete = false,
            }
        }
        if !complete {
            continue;
        }
        let bar = OhlcBar {
            date: row.date,
            open: filled[0],
            high: filled[1],
            low: filled[2],
            close: filled[3],
        };
        bar.validate()
            .map_err(|reason| Error::InvalidRow { row: row.line, reason })?;
        bars.push(bar);
    }
    if bars.is_empty() {
        return Err(Error::Empty("every CSV row is missing a price field".into()));
    }
    PriceSeries::new(symbol, bars)
}

/// Rolling statistics over the mid-price, one row per bar.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    /// Entries before `valid_from` are `NaN` where a window is not yet full.
    pub rows: Vec<Vec<f64>>,
    pub valid_from: usize,
}

impl FeatureMatrix {
    pub fn valid_rows(&self) -> &[Vec<f64>] {
        &self.rows[self.valid_from..]
    }
}

pub fn derive_features(series: &PriceSeries, windows: &[usize]) -> Result<FeatureMatrix> {
    rolling_features(series.mid(), windows)
}

/// Trailing rolling mean and population standard deviation for each window,
/// inclusive of the current value. Columns come in `mean_n, std_n` pairs.
pub fn rolling_features(values: &[f64], windows: &[usize]) -> Result<FeatureMatrix> {
    if windows.is_empty() {
        return Err(Error::invalid("at least one rolling window is required"));
    }
    for &w in windows {
        if w == 0 || w >= values.len() {
            return Err(Error::invalid(format!(
                "rolling window {w} must be in 1..{}",
                values.len()
            )));
        }
    }
    let widest = *windows.iter().max().expect("non-empty");
    let names = windows
        .iter()
        .flat_map(|w| [format!("mean_{w}"), format!("std_{w}")])
        .collect();
    let rows = (0..values.len())
        .map(|t| {
            windows
                .iter()
                .flat_map(|&w| {
                    if t + 1 < w {
                        [f64::NAN, f64::NAN]
                    } else {
                        let (mean, std) = mean_and_population_std(&values[t + 1 - w..=t]);
                        [mean, std]
                    }
                })
                .collect()
        })
        .collect();
    Ok(FeatureMatrix {
        names,
        rows,
        valid_from: widest - 1,
    })
}

fn mean_and_population_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-feature standardization parameters fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Fits mean and population standard deviation per column.
pub fn fit_scaler<R: AsRef<[f64]>>(rows: &[R]) -> Result<ScalerParams> {
    if rows.len() < 2 {
        return Err(Error::invalid(format!(
            "scaler needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let width = rows[0].as_ref().len();
    if width == 0 {
        return Err(Error::invalid("scaler rows have no columns"));
    }
    let mut columns = vec![Vec::with_capacity(rows.len()); width];
    for row in rows {
        let row = row.as_ref();
        if row.len() != width {
            return Err(Error::DimensionMismatch {
                what: "scaler row width",
                expected: width,
                found: row.len(),
            });
        }
        for (col, &v) in columns.iter_mut().zip(row) {
            if !v.is_finite() {
                return Err(Error::invalid("scaler input contains a non-finite value"));
            }
            col.push(v);
        }
    }
    let (mean, std) = columns
        .iter()
        .map(|c| {
            let (m, s) = mean_and_population_std(c);
            (m, if s < STD_FLOOR { 1.0 } else { s })
        })
        .unzip();
    Ok(ScalerParams { mean, std })
}

impl ScalerParams {
    /// Fits a single-feature scaler on a value sequence.
    pub fn fit_column(values: &[f64]) -> Result<Self> {
        let rows: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
        fit_scaler(&rows)
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn forward(&self, feature: usize, x: f64) -> f64 {
        (x - self.mean[feature]) / self.std[feature]
    }

    pub fn inverse(&self, feature: usize, z: f64) -> f64 {
        z * self.std[feature] + self.mean[feature]
    }
}

pub fn apply_scaler<R: AsRef<[f64]>>(params: &ScalerParams, rows: &[R], direction: Direction) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .map(|row| {
            let row = row.as_ref();
            if row.len() != params.width() {
                return Err(Error::DimensionMismatch {
                    what: "scaler columns",
                    expected: params.width(),
                    found: row.len(),
                });
            }
            Ok(row
                .iter()
                .enumerate()
                .map(|(j, &x)| match direction {
                    Direction::Forward => params.forward(j, x),
                    Direction::Inverse => params.inverse(j, x),
                })
                .collect())
        })
        .collect()
}

/// Chronological split: the last `test_len` bars form the test segment.
pub fn split_train_test(series: &PriceSeries, test_len: usize) -> Result<(PriceSeries, PriceSeries)> {
    if test_len == 0 || test_len >= series.len() {
        return Err(Error::invalid(format!(
            "test length {test_len} must be in 1..{}",
            series.len()
        )));
    }
    let cut = series.len() - test_len;
    let part = |range: std::ops::Range<usize>| PriceSeries {
        symbol: series.symbol.clone(),
        bars: series.bars[range.clone()].to_vec(),
        mid: series.mid[range].to_vec(),
    };
    Ok((part(0..cut), part(cut..series.len())))
}
