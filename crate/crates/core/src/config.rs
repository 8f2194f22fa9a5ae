//! Flat `key = value` run configuration.
//!
//! Keys and defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `data.SYMBOL` | none; path to a CSV or canonical JSON series |
//! | `test_len` | 252 |
//! | `model` | `lstm-mse` (`arima`, `lstm`, `lstm-mse`, `lstm-directional`, `persistence`) |
//! | `loss` | `mse` (`directional`, alias `custom`) |
//! | `seed` | 0 |
//! | `window` | 50 |
//! | `horizon` | 1 |
//! | `layers` | 4 |
//! | `hidden` | 64 |
//! | `dropout` | 0.3 |
//! | `learning_rate` | 0.005 |
//! | `batch_size` | 256 |
//! | `epochs` | 400 |
//! | `feature_windows` | empty; comma list such as `3,7,30` |
//! | `validation_fraction` | 0 |
//! | `arima.max_p`, `arima.max_d`, `arima.max_q` | 5, 2, 5 |
//! | `criterion` | `aic` |
//! | `arima.context` | 60 |
//! | `initial_wealth` | 1000 |
//! | `backtest_days` | 0, meaning the whole test segment |
//! | `sweep.windows` | `30,40,50,60,70,80,90` |
//! | `sweep.horizons` | `1,2,3,4,5,6,7,8,9` |
//! | `output_dir` | `$STOCKCAST_OUTPUT_DIR`, else `out` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::arima::{ArimaGrid, Criterion};
use crate::error::{Error, Result};
use crate::harness::{ModelKind, DEFAULT_SWEEP_HORIZONS, DEFAULT_SWEEP_WINDOWS};
use crate::lstm::{LossKind, LstmConfig};

pub const OUTPUT_DIR_ENV: &str = "STOCKCAST_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Arima,
    Lstm,
    Persistence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Symbol to series path, sorted by symbol.
    pub data: BTreeMap<String, PathBuf>,
    pub test_len: usize,
    family: Family,
    pub lstm: LstmConfig,
    pub arima_grid: ArimaGrid,
    pub criterion: Criterion,
    pub arima_context: usize,
    pub initial_wealth: f64,
    pub backtest_days: usize,
    pub sweep_windows: Vec<usize>,
    pub sweep_horizons: Vec<usize>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let output_dir = std::env::var_os(OUTPUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map_or_else(|| PathBuf::from("out"), PathBuf::from);
        RunConfig {
            data: BTreeMap::new(),
            test_len: 252,
            family: Family::Lstm,
            lstm: LstmConfig::default(),
            arima_grid: ArimaGrid::default(),
            criterion: Criterion::Aic,
            arima_context: 60,
            initial_wealth: 1000.0,
            backtest_days: 0,
            sweep_windows: DEFAULT_SWEEP_WINDOWS.to_vec(),
            sweep_horizons: DEFAULT_SWEEP_HORIZONS.to_vec(),
            output_dir,
        }
    }
}

fn number<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("`{value}` is not a valid number"))
}

fn list(value: &str) -> std::result::Result<Vec<usize>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(number)
        .collect()
}

fn join(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    pub fn model(&self) -> ModelKind {
        match (self.family, self.lstm.loss) {
            (Family::Arima, _) => ModelKind::Arima,
            (Family::Persistence, _) => ModelKind::Persistence,
            (Family::Lstm, LossKind::Mse) => ModelKind::LstmMse,
            (Family::Lstm, LossKind::Directional) => ModelKind::LstmDirectional,
        }
    }

    /// Sets one key; used both by the parser and for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        if let Some(symbol) = key.strip_prefix("data.") {
            if symbol.is_empty() || value.is_empty() {
                return Err("data entries need a symbol and a path".into());
            }
            self.data.insert(symbol.to_string(), PathBuf::from(value));
            return Ok(());
        }
        match key {
            "test_len" => self.test_len = number(value)?,
            "model" => match value.to_ascii_lowercase().as_str() {
                "arima" => self.family = Family::Arima,
                "persistence" => self.family = Family::Persistence,
                "lstm" => self.family = Family::Lstm,
                other => {
                    let kind: ModelKind = other.parse().map_err(|e: Error| e.to_string())?;
                    self.family = Family::Lstm;
                    self.lstm.loss = if kind == ModelKind::LstmDirectional {
                        LossKind::Directional
                    } else {
                        LossKind::Mse
                    };
                }
            },
            "loss" => self.lstm.loss = value.parse().map_err(|e: Error| e.to_string())?,
            "seed" => self.lstm.seed = number(value)?,
            "window" => self.lstm.window = number(value)?,
            "horizon" => self.lstm.horizon = number(value)?,
            "layers" => self.lstm.layers = number(value)?,
            "hidden" => self.lstm.hidden = number(value)?,
            "dropout" => self.lstm.dropout_rate = number(value)?,
            "learning_rate" => self.lstm.learning_rate = number(value)?,
            "batch_size" => self.lstm.batch_size = number(value)?,
            "epochs" => self.lstm.epochs = number(value)?,
            "feature_windows" => self.lstm.feature_windows = list(value)?,
            "validation_fraction" => self.lstm.validation_fraction = number(value)?,
            "arima.max_p" => self.arima_grid.max_p = number(value)?,
            "arima.max_d" => self.arima_grid.max_d = number(value)?,
            "arima.max_q" => self.arima_grid.max_q = number(value)?,
            "criterion" => self.criterion = value.parse().map_err(|e: Error| e.to_string())?,
            "arima.context" => self.arima_context = number(value)?,
            "initial_wealth" => self.initial_wealth = number(value)?,
            "backtest_days" => self.backtest_days = number(value)?,
            "sweep.windows" => self.sweep_windows = list(value)?,
            "sweep.horizons" => self.sweep_horizons = list(value)?,
            "output_dir" => {
                if value.is_empty() {
                    return Err("output_dir may not be empty".into());
                }
                self.output_dir = PathBuf::from(value);
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm.validate()?;
        if self.test_len == 0 {
            return Err(Error::invalid("test_len must be positive"));
        }
        if !(self.initial_wealth.is_finite() && self.initial_wealth > 0.0) {
            return Err(Error::invalid("initial_wealth must be positive"));
        }
        if self.arima_context == 0 {
            return Err(Error::invalid("arima.context must be positive"));
        }
        if self.sweep_windows.is_empty() || self.sweep_horizons.is_empty() {
            return Err(Error::invalid("sweep grids may not be empty"));
        }
        Ok(())
    }

    /// Every key with its effective value, in key order.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        for (symbol, path) in &self.data {
            put(&format!("data.{symbol}"), path.display().to_string());
        }
        put("test_len", self.test_len.to_string());
        put("model", self.model().to_string());
        put("loss", self.lstm.loss.to_string());
        put("seed", self.lstm.seed.to_string());
        put("window", self.lstm.window.to_string());
        put("horizon", self.lstm.horizon.to_string());
        put("layers", self.lstm.layers.to_string());
        put("hidden", self.lstm.hidden.to_string());
        put("dropout", self.lstm.dropout_rate.to_string());
        put("learning_rate", self.lstm.learning_rate.to_string());
        put("batch_size", self.lstm.batch_size.to_string());
        put("epochs", self.lstm.epochs.to_string());
        put("feature_windows", join(&self.lstm.feature_windows));
        put("validation_fraction", self.lstm.validation_fraction.to_string());
        put("arima.max_p", self.arima_grid.max_p.to_string());
        put("arima.max_d", self.arima_grid.max_d.to_string());
        put("arima.max_q", self.arima_grid.max_q.to_string());
        put("criterion", self.criterion.to_string());
        put("arima.context", self.arima_context.to_string());
        put("initial_wealth", self.initial_wealth.to_string());
        put("backtest_days", self.backtest_days.to_string());
        put("sweep.windows", join(&self.sweep_windows));
        put("sweep.horizons", join(&self.sweep_horizons));
        put("output_dir", self.output_dir.display().to_string());
        m
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fail = |reason: String| Error::Config { line, reason };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| fail(format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(fail(format!("duplicate key `{key}`, first set on line {first}")));
            }
            config.set(key, value).map_err(fail)?;
        }
        config.validate()?;
        Ok(config)
    }
}
