//! Forecast-driven portfolio backtesting.
//!
//! Daily OHLC bars are reduced to a mid-price series, forecast one or more
//! days ahead by either an ARIMA model or a stacked LSTM, and the forecasts
//! drive a bot that rebalances a long-only portfolio every day. Net worth is
//! tracked against a buy-and-hold baseline.
//!
//! The pipeline modules, bottom-up:
//!
//! - [`market_data`]: CSV ingestion, mid-prices, rolling features, scaling, splits.
//! - [`arima`]: conditional-sum-of-squares ARIMA fitting and order search.
//! - [`lstm`]: a stacked LSTM regressor with hand-written backprop and Adam.
//! - [`trader`]: the daily rebalancing program, HOLD baseline and backtest.
//! - [`harness`]: walk-forward evaluation, window/horizon sweeps, strategy comparison.
//! - [`config`] and [`cli`]: the batch command-line front end.

pub mod arima;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
mod linalg;
pub mod lstm;
pub mod market_data;
pub mod trader;

pub use error::{Error, Result};
