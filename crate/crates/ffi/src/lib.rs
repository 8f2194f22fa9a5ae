//! C interface to stockcast.
//!
//! Every fallible function returns an [`ScStatus`]. On failure the message is
//! kept per thread and can be read with [`sc_last_error_message`]. Handles
//! are opaque pointers released with their matching `_free` function. Arrays
//! are caller-allocated; matrices are row-major with one row per day.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use stockcast::arima::{arima_forecast, auto_arima, ArimaGrid, ArimaModel, Criterion};
use stockcast::lstm::{compute_loss, LossKind, LstmModel};
use stockcast::market_data::PriceSeries;
use stockcast::trader::{hold_strategy, optimize_portfolio, run_backtest, PortfolioState};
use stockcast::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

pub const SC_CRITERION_AIC: c_int = 0;
pub const SC_CRITERION_BIC: c_int = 1;
pub const SC_LOSS_MSE: c_int = 0;
pub const SC_LOSS_DIRECTIONAL: c_int = 1;

/// Loaded price series.
pub struct ScSeries(PriceSeries);

/// Fitted ARIMA model.
pub struct ScArimaModel(ArimaModel);

/// Trained LSTM forecaster.
pub struct ScLstmModel(LstmModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: ScStatus,
    message: String,
}

impl Failure {
    fn new(status: ScStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::File { .. } | Error::Io(_) => ScStatus::Io,
            Error::Empty(_)
            | Error::MissingColumn(_)
            | Error::InvalidRow { .. }
            | Error::Config { .. }
            | Error::Json(_)
            | Error::Csv(_) => ScStatus::Parse,
            Error::ConstantSeries
            | Error::Singular(_)
            | Error::NoCandidate
            | Error::NonFiniteLoss { .. }
            | Error::Diverged { .. } => ScStatus::Numeric,
            _ => ScStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new(ScStatus::Parse, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ScStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let text = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Failure::new(ScStatus::Panic, text))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            ScStatus::Ok
        }
        Err(f) => {
            set_last_error(&f.message);
            f.status
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(ScStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(ScStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn values<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(ScStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn values_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::new(ScStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(ScStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(ScStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

fn rows(flat: &[f64], width: usize) -> Vec<&[f64]> {
    flat.chunks(width).collect()
}

fn criterion(code: c_int) -> Result<Criterion, Failure> {
    match code {
        SC_CRITERION_AIC => Ok(Criterion::Aic),
        SC_CRITERION_BIC => Ok(Criterion::Bic),
        other => Err(Failure::new(
            ScStatus::InvalidArgument,
            format!("unknown criterion {other}"),
        )),
    }
}

fn loss_kind(code: c_int) -> Result<LossKind, Failure> {
    match code {
        SC_LOSS_MSE => Ok(LossKind::Mse),
        SC_LOSS_DIRECTIONAL => Ok(LossKind::Directional),
        other => Err(Failure::new(
            ScStatus::InvalidArgument,
            format!("unknown loss kind {other}"),
        )),
    }
}

/// Message for the last failure on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn sc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads an OHLC CSV file or canonical JSON series.
///
/// # Safety
/// `path` and `symbol` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_series_load(
    path: *const c_char,
    symbol: *const c_char,
    out: *mut *mut ScSeries,
) -> ScStatus {
    guard(|| {
        let path = text(path, "path")?;
        let symbol = text(symbol, "symbol")?;
        let series = PriceSeries::read_path(Path::new(path), symbol)?;
        write_out(out, Box::into_raw(Box::new(ScSeries(series))), "out")
    })
}

/// Number of bars, or 0 for a null handle.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_series_len(series: *const ScSeries) -> usize {
    series.as_ref().map_or(0, |s| s.0.len())
}

/// Copies the mid-price sequence into `buf`.
///
/// # Safety
/// `series` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_series_mids(series: *const ScSeries, buf: *mut f64, len: usize) -> ScStatus {
    guard(|| {
        let mid = handle(series, "series")?.0.mid();
        if len < mid.len() {
            return Err(Failure::new(
                ScStatus::BufferTooSmall,
                format!("need {} values, buffer holds {len}", mid.len()),
            ));
        }
        values_mut(buf, len, "buf")?[..mid.len()].copy_from_slice(mid);
        Ok(())
    })
}

/// # Safety
/// `series` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_series_free(series: *mut ScSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Exhaustive order search over `p <= max_p`, `d <= max_d`, `q <= max_q`.
///
/// # Safety
/// `data` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_auto_arima(
    data: *const f64,
    len: usize,
    max_p: usize,
    max_d: usize,
    max_q: usize,
    criterion_code: c_int,
    out: *mut *mut ScArimaModel,
) -> ScStatus {
    guard(|| {
        let series = values(data, len, "data")?;
        let grid = ArimaGrid { max_p, max_d, max_q };
        let model = auto_arima(series, grid, criterion(criterion_code)?)?;
        write_out(out, Box::into_raw(Box::new(ScArimaModel(model))), "out")
    })
}

/// Writes the selected order. Any of the outputs may be null.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_arima_order(
    model: *const ScArimaModel,
    p: *mut usize,
    d: *mut usize,
    q: *mut usize,
) -> ScStatus {
    guard(|| {
        let order = handle(model, "model")?.0.order;
        for (out, v) in [(p, order.p), (d, order.d), (q, order.q)] {
            if !out.is_null() {
                out.write(v);
            }
        }
        Ok(())
    })
}

/// Forecasts `horizon` steps after `history`, written to `out`.
///
/// # Safety
/// `history` must hold `len` doubles and `out` `horizon` doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_arima_forecast(
    model: *const ScArimaModel,
    history: *const f64,
    len: usize,
    horizon: usize,
    out: *mut f64,
) -> ScStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        let f = arima_forecast(model, values(history, len, "history")?, horizon)?;
        values_mut(out, horizon, "out")?.copy_from_slice(&f);
        Ok(())
    })
}

/// Serializes the model; free the result with [`sc_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_arima_to_json(model: *const ScArimaModel, out: *mut *mut c_char) -> ScStatus {
    guard(|| {
        let json = serde_json::to_string(&handle(model, "model")?.0)?;
        let c = CString::new(json).map_err(|e| Failure::new(ScStatus::Parse, e.to_string()))?;
        write_out(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_arima_free(model: *mut ScArimaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads a model document written by `stockcast fit`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_lstm_from_json(json: *const c_char, out: *mut *mut ScLstmModel) -> ScStatus {
    guard(|| {
        let model: LstmModel = serde_json::from_str(text(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(ScLstmModel(model))), "out")
    })
}

/// Raw values [`sc_lstm_predict`] needs, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_lstm_history_len(model: *const ScLstmModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.history_len())
}

/// Forecast width, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_lstm_horizon(model: *const ScLstmModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.config().horizon)
}

/// Predicts from exactly `sc_lstm_history_len` raw prices.
///
/// # Safety
/// `recent` must hold `len` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_lstm_predict(
    model: *const ScLstmModel,
    recent: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> ScStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        let horizon = model.config().horizon;
        if out_len < horizon {
            return Err(Failure::new(
                ScStatus::BufferTooSmall,
                format!("need {horizon} values, buffer holds {out_len}"),
            ));
        }
        let f = model.predict(values(recent, len, "recent")?)?;
        values_mut(out, out_len, "out")?[..horizon].copy_from_slice(&f);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_lstm_free(model: *mut ScLstmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// One rebalancing decision over `n` assets. `shares` is read as the current
/// holding and overwritten with the new one; `cash` likewise. The objective
/// value goes to `expected_return` when it is not null.
///
/// # Safety
/// `prices`, `predicted` and `shares` must hold `n` doubles; `cash` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sc_optimize_portfolio(
    n: usize,
    prices: *const f64,
    predicted: *const f64,
    shares: *mut f64,
    cash: *mut f64,
    expected_return: *mut f64,
) -> ScStatus {
    guard(|| {
        let shares = values_mut(shares, n, "shares")?;
        let cash = cash
            .as_mut()
            .ok_or_else(|| Failure::new(ScStatus::NullPointer, "cash is null"))?;
        let state = PortfolioState {
            shares: shares.to_vec(),
            cash: *cash,
        };
        let d = optimize_portfolio(values(prices, n, "prices")?, values(predicted, n, "predicted")?, &state)?;
        shares.copy_from_slice(&d.new_shares);
        *cash = d.new_cash;
        if !expected_return.is_null() {
            expected_return.write(d.expected_return);
        }
        Ok(())
    })
}

/// Equal-weight buy-and-hold over a `days x n` price matrix.
///
/// # Safety
/// `prices` must hold `days * n` doubles and `out` `days` doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_hold_strategy(
    initial_wealth: f64,
    prices: *const f64,
    days: usize,
    n: usize,
    out: *mut f64,
) -> ScStatus {
    guard(|| {
        if n == 0 {
            return Err(Failure::new(ScStatus::InvalidArgument, "no assets"));
        }
        let flat = values(prices, days * n, "prices")?;
        let curve = hold_strategy(initial_wealth, &rows(flat, n))?;
        values_mut(out, days, "out")?.copy_from_slice(&curve);
        Ok(())
    })
}

/// Backtests `days` rebalances. `forecasts` is `days x n`, `actuals` is
/// `(days + 1) x n`, and `net_worth` receives `days + 1` values.
///
/// # Safety
/// All arrays must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn sc_run_backtest(
    forecasts: *const f64,
    actuals: *const f64,
    days: usize,
    n: usize,
    initial_wealth: f64,
    net_worth: *mut f64,
) -> ScStatus {
    guard(|| {
        if n == 0 {
            return Err(Failure::new(ScStatus::InvalidArgument, "no assets"));
        }
        let f = values(forecasts, days * n, "forecasts")?;
        let a = values(actuals, (days + 1) * n, "actuals")?;
        let result = run_backtest(&rows(f, n), &rows(a, n), initial_wealth)?;
        values_mut(net_worth, days + 1, "net_worth")?.copy_from_slice(&result.net_worth);
        Ok(())
    })
}

/// Loss of one `horizon`-step prediction against its target.
///
/// # Safety
/// `pred` and `target` must hold `horizon` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_compute_loss(
    pred: *const f64,
    target: *const f64,
    horizon: usize,
    anchor: f64,
    kind: c_int,
    out: *mut f64,
) -> ScStatus {
    guard(|| {
        let loss = compute_loss(
            values(pred, horizon, "pred")?,
            values(target, horizon, "target")?,
            anchor,
            loss_kind(kind)?,
        )?;
        write_out(out, loss, "out")
    })
}
