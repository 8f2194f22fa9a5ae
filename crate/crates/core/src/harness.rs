//! Walk-forward evaluation and experiment drivers.
//!
//! Models are fit once on the training segment. Over the test segment each
//! day's forecast is conditioned only on realized prices strictly before that
//! day, so errors never compound through the model's own predictions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arima::{arima_forecast, ArimaModel};
use crate::error::{Error, Result};
use crate::lstm::{fit_forecaster, LossKind, LstmConfig, LstmModel};
use crate::market_data::{split_train_test, PriceSeries};
use crate::trader::{hold_strategy, run_backtest, DayRecord};

pub const DEFAULT_SWEEP_WINDOWS: [usize; 7] = [30, 40, 50, 60, 70, 80, 90];
pub const DEFAULT_SWEEP_HORIZONS: [usize; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Arima,
    LstmMse,
    LstmDirectional,
    Persistence,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Arima => "arima",
            ModelKind::LstmMse => "lstm-mse",
            ModelKind::LstmDirectional => "lstm-directional",
            ModelKind::Persistence => "persistence",
        }
    }

    pub fn is_lstm(&self) -> bool {
        matches!(self, ModelKind::LstmMse | ModelKind::LstmDirectional)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arima" => Ok(ModelKind::Arima),
            "lstm-mse" => Ok(ModelKind::LstmMse),
            "lstm-directional" | "lstm-custom" => Ok(ModelKind::LstmDirectional),
            "persistence" => Ok(ModelKind::Persistence),
            other => Err(Error::invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Anything that maps a trailing window of raw prices to an `h`-step forecast.
pub trait Forecaster: Sync {
    fn kind(&self) -> ModelKind;

    /// Fewest trailing values [`forecast`](Forecaster::forecast) accepts.
    fn min_history(&self) -> usize;

    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>>;

    /// Snapshot of the settings recorded alongside evaluation results.
    fn describe(&self) -> serde_json::Value;
}

impl Forecaster for ArimaModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Arima
    }

    fn min_history(&self) -> usize {
        ArimaModel::min_history(self)
    }

    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        arima_forecast(self, history, horizon)
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "order": self.order,
            "aic": self.aic,
            "bic": self.bic,
            "converged": self.converged,
        })
    }
}

impl Forecaster for LstmModel {
    fn kind(&self) -> ModelKind {
        match self.config().loss {
            LossKind::Mse => ModelKind::LstmMse,
            LossKind::Directional => ModelKind::LstmDirectional,
        }
    }

    fn min_history(&self) -> usize {
        self.history_len()
    }

    /// Uses the most recent `history_len` values; `horizon` may not exceed
    /// the trained output width.
    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        let trained = self.config().horizon;
        if horizon == 0 || horizon > trained {
            return Err(Error::invalid(format!(
                "model predicts {trained} steps, asked for {horizon}"
            )));
        }
        let need = self.history_len();
        if history.len() < need {
            return Err(Error::DimensionMismatch {
                what: "prediction history",
                expected: need,
                found: history.len(),
            });
        }
        let mut out = self.predict(&history[history.len() - need..])?;
        out.truncate(horizon);
        Ok(out)
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(self.config()).unwrap_or(serde_json::Value::Null)
    }
}

/// Predicts the last observed value for every future step.
#[derive(Debug, Clone, Copy, Default)]
pub struct Persistence;

impl Forecaster for Persistence {
    fn kind(&self) -> ModelKind {
        ModelKind::Persistence
    }

    fn min_history(&self) -> usize {
        1
    }

    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        let last = *history
            .last()
            .ok_or_else(|| Error::invalid("persistence needs one value"))?;
        Ok(vec![last; horizon])
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({})
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// First forecast day.
    pub date: NaiveDate,
    pub values: Vec<f64>,
    pub actuals: Vec<f64>,
    /// Realized mid-price on the day before `date`.
    pub last_observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub symbol: String,
    pub model: ModelKind,
    pub mse_raw: f64,
    pub window: usize,
    pub horizon: usize,
    /// Date of the last training bar, the day the first forecast is made.
    pub origin_date: NaiveDate,
    pub predictions: Vec<Prediction>,
    pub config: serde_json::Value,
}

impl EvalResult {
    pub fn recompute_mse(&self) -> f64 {
        let (sum, count) = self
            .predictions
            .iter()
            .flat_map(|p| p.values.iter().zip(&p.actuals))
            .fold((0.0, 0usize), |(s, c), (v, a)| (s + (v - a) * (v - a), c + 1));
        sum / count as f64
    }
}

/// Rolling-origin evaluation over the last `test_len` bars of `series`.
///
/// For every test index `t` with `t + horizon <= len`, the forecaster sees
/// the `context` realized mid-prices before `t`.
pub fn walk_forward_eval(
    forecaster: &dyn Forecaster,
    series: &PriceSeries,
    test_len: usize,
    context: usize,
    horizon: usize,
) -> Result<EvalResult> {
    let n = series.len();
    if test_len == 0 || test_len >= n {
        return Err(Error::invalid(format!("test length {test_len} must be in 1..{n}")));
    }
    if horizon == 0 || test_len < horizon {
        return Err(Error::invalid(format!(
            "test segment of {test_len} bars is shorter than horizon {horizon}"
        )));
    }
    let start = n - test_len;
    if context < forecaster.min_history() || context > start {
        return Err(Error::invalid(format!(
            "context {context} must be between {} and the training length {start}",
            forecaster.min_history()
        )));
    }
    let mid = series.mid();
    let bars = series.bars();
    let predictions = (start..=n - horizon)
        .into_par_iter()
        .map(|t| {
            let values = forecaster.forecast(&mid[t - context..t], horizon)?;
            Ok(Prediction {
                date: bars[t].date,
                values,
                actuals: mid[t..t + horizon].to_vec(),
                last_observed: mid[t - 1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut result = EvalResult {
        symbol: series.symbol().to_string(),
        model: forecaster.kind(),
        mse_raw: 0.0,
        window: context,
        horizon,
        origin_date: bars[start - 1].date,
        predictions,
        config: forecaster.describe(),
    };
    result.mse_raw = result.recompute_mse();
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub window: usize,
    pub horizon: usize,
    pub mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub windows: Vec<usize>,
    pub horizons: Vec<usize>,
    /// Window-major order.
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, window: usize, horizon: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.window == window && c.horizon == horizon)
    }

    /// `window,horizon,mse` with failed cells written as `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("window,horizon,mse\n");
        for c in &self.cells {
            let mse = c.mse.map_or_else(|| "NaN".to_string(), |v| v.to_string());
            let _ = writeln!(out, "{},{},{}", c.window, c.horizon, mse);
        }
        out
    }
}

/// Trains and evaluates one `(window, horizon)` cell.
pub fn sweep_cell(
    series: &PriceSeries,
    test_len: usize,
    window: usize,
    horizon: usize,
    template: &LstmConfig,
) -> Result<f64> {
    let config = LstmConfig {
        window,
        horizon,
        ..template.clone()
    };
    let (train, _) = split_train_test(series, test_len)?;
    let (model, _) = fit_forecaster(train.mid(), &config)?;
    let eval = walk_forward_eval(&model, series, test_len, model.history_len(), horizon)?;
    Ok(eval.mse_raw)
}

/// Independent LSTM per cell, all seeded from `template.seed`.
pub fn sweep_grid(
    series: &PriceSeries,
    test_len: usize,
    windows: &[usize],
    horizons: &[usize],
    template: &LstmConfig,
) -> SweepGrid {
    let pairs: Vec<(usize, usize)> = windows
        .iter()
        .flat_map(|&w| horizons.iter().map(move |&h| (w, h)))
        .collect();
    let cells = pairs
        .into_par_iter()
        .map(
            |(window, horizon)| match sweep_cell(series, test_len, window, horizon, template) {
                Ok(mse) if mse.is_finite() => SweepCell {
                    window,
                    horizon,
                    mse: Some(mse),
                    error: None,
                },
                Ok(mse) => SweepCell {
                    window,
                    horizon,
                    mse: None,
                    error: Some(format!("non-finite mse {mse}")),
                },
                Err(e) => SweepCell {
                    window,
                    horizon,
                    mse: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect();
    SweepGrid {
        windows: windows.to_vec(),
        horizons: horizons.to_vec(),
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyCurve {
    pub name: String,
    pub net_worth: Vec<f64>,
    pub final_value: f64,
    #[serde(skip)]
    pub days: Vec<DayRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub symbols: Vec<String>,
    pub excluded: Vec<String>,
    pub initial_wealth: f64,
    /// One date per net-worth entry; the first is the day trading starts.
    pub dates: Vec<NaiveDate>,
    pub strategies: Vec<StrategyCurve>,
}

impl ComparisonReport {
    pub fn strategy(&self, name: &str) -> Option<&StrategyCurve> {
        self.strategies.iter().find(|s| s.name == name)
    }

    pub fn net_worth_csv(&self) -> String {
        let mut out = String::from("day_index,date,strategy,net_worth\n");
        for s in &self.strategies {
            for (i, (v, d)) in s.net_worth.iter().zip(&self.dates).enumerate() {
                let _ = writeln!(out, "{i},{d},{},{v}", s.name);
            }
        }
        out
    }

    pub fn decision_log_csv(&self) -> String {
        let mut out = String::from("day_index,date,strategy,asset,shares,cash\n");
        for s in &self.strategies {
            for day in &s.days {
                let d = &day.decision;
                let (asset, shares) = match d.asset {
                    Some(i) => (self.symbols[i].as_str(), d.new_shares[i]),
                    None => ("CASH", 0.0),
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{asset},{shares},{}",
                    day.day, self.dates[day.day], s.name, d.new_cash
                );
            }
        }
        out
    }
}

fn misaligned(symbol: &str, reason: impl Into<String>) -> Error {
    Error::Misaligned {
        symbol: symbol.to_string(),
        reason: reason.into(),
    }
}

/// Backtests every model's first-step forecasts over the shared test days
/// and adds the HOLD baseline over the same assets.
///
/// `max_days` truncates the trading span; `exclude` drops symbols before
/// anything else, so HOLD re-weights equally over the rest.
pub fn compare_strategies(
    results: &[EvalResult],
    initial_wealth: f64,
    exclude: &[String],
    max_days: Option<usize>,
) -> Result<ComparisonReport> {
    let mut by_kind: BTreeMap<ModelKind, BTreeMap<&str, &EvalResult>> = BTreeMap::new();
    for r in results.iter().filter(|r| !exclude.contains(&r.symbol)) {
        if by_kind
            .entry(r.model)
            .or_default()
            .insert(r.symbol.as_str(), r)
            .is_some()
        {
            return Err(misaligned(&r.symbol, format!("duplicate {} result", r.model)));
        }
    }
    let symbols: BTreeSet<&str> = by_kind.values().flat_map(|m| m.keys().copied()).collect();
    if symbols.is_empty() {
        return Err(Error::Empty("no evaluation results left to compare".into()));
    }
    let symbols: Vec<&str> = symbols.into_iter().collect();
    let (_, reference) = by_kind.iter().next().expect("non-empty");
    let lead = reference[symbols[0]];

    for (kind, per_symbol) in &by_kind {
        for &sym in &symbols {
            let r = per_symbol
                .get(sym)
                .ok_or_else(|| misaligned(sym, format!("no {kind} result")))?;
            let base = reference.get(sym).copied().unwrap_or(lead);
            if r.origin_date != lead.origin_date
                || r.predictions.len() != lead.predictions.len()
                || r.predictions
                    .iter()
                    .zip(&lead.predictions)
                    .any(|(a, b)| a.date != b.date)
            {
                return Err(misaligned(
                    sym,
                    format!("{kind} forecast dates differ from {}", lead.symbol),
                ));
            }
            if r.predictions
                .iter()
                .zip(&base.predictions)
                .any(|(a, b)| a.last_observed != b.last_observed || a.actuals[0] != b.actuals[0])
            {
                return Err(misaligned(sym, format!("{kind} actual prices differ between results")));
            }
        }
    }

    let mut days = lead.predictions.len();
    if let Some(cap) = max_days {
        days = days.min(cap);
    }
    if days == 0 {
        return Err(Error::invalid("no trading days to backtest"));
    }
    let actuals: Vec<Vec<f64>> = (0..=days)
        .map(|j| {
            symbols
                .iter()
                .map(|s| {
                    let preds = &reference[s].predictions;
                    if j < days {
                        preds[j].last_observed
                    } else {
                        preds[days - 1].actuals[0]
                    }
                })
                .collect()
        })
        .collect();
    let mut dates = vec![lead.origin_date];
    dates.extend(lead.predictions[..days].iter().map(|p| p.date));

    let mut strategies = Vec::new();
    for (kind, per_symbol) in &by_kind {
        let forecasts: Vec<Vec<f64>> = (0..days)
            .map(|j| symbols.iter().map(|s| per_symbol[s].predictions[j].values[0]).collect())
            .collect();
        let bt = run_backtest(&forecasts, &actuals, initial_wealth)?;
        strategies.push(StrategyCurve {
            name: kind.to_string(),
            final_value: *bt.net_worth.last().expect("T+1 entries"),
            net_worth: bt.net_worth,
            days: bt.days,
        });
    }
    let hold = hold_strategy(initial_wealth, &actuals)?;
    strategies.push(StrategyCurve {
        name: "hold".into(),
        final_value: *hold.last().expect("non-empty"),
        net_worth: hold,
        days: Vec::new(),
    });

    let mut excluded: Vec<String> = exclude.to_vec();
    excluded.sort();
    excluded.dedup();
    Ok(ComparisonReport {
        symbols: symbols.into_iter().map(String::from).collect(),
        excluded,
        initial_wealth,
        dates,
        strategies,
    })
}
