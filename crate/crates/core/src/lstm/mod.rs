//! Stacked LSTM regressor trained from scratch.
//!
//! The network reads a window of `W` time steps, runs them through `layers`
//! LSTM layers (each followed by dropout), and maps the top layer's final
//! hidden state to `H` outputs with a dense head. All parameters live in one
//! flat `f64` buffer; [`Layout`] records where each tensor sits, which keeps
//! the optimizer and finite-difference checks trivial.

mod adam;
mod dataset;
mod loss;
mod network;
mod train;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{apply_scaler, fit_scaler, Direction, ScalerParams};

pub use adam::{adam_step, AdamHyper, AdamState};
pub use dataset::{build_windows, build_windows_rows, WindowedDataset};
pub use loss::{compute_loss, direction_violated, LossKind};
pub use network::{
    backward, compute_gradients, forward_with_masks, lstm_forward, DropoutMasks, ForwardCache, Gradients, Mode,
};
pub use train::{train, EpochLoss};

/// Serialization format version for [`LstmModel`] documents.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub window: usize,
    pub horizon: usize,
    pub layers: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub seed: u64,
    /// Rolling mean/std windows appended as extra input channels after the mid-price.
    pub feature_windows: Vec<usize>,
    /// Trailing fraction of training windows held out for the validation curve.
    pub validation_fraction: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            window: 50,
            horizon: 1,
            layers: 4,
            hidden: 64,
            dropout_rate: 0.30,
            learning_rate: 5e-3,
            batch_size: 256,
            epochs: 400,
            loss: LossKind::Mse,
            seed: 0,
            feature_windows: Vec::new(),
            validation_fraction: 0.0,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window", self.window),
            ("horizon", self.horizon),
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout_rate {} must be in [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction must be in [0, 1)"));
        }
        if self.feature_windows.contains(&0) {
            return Err(Error::invalid("feature windows must be positive"));
        }
        Ok(())
    }

    /// Channels per time step: the mid-price plus a mean and std per feature window.
    pub fn input_width(&self) -> usize {
        1 + 2 * self.feature_windows.len()
    }

    /// Raw values needed to build one input window.
    pub fn history_len(&self) -> usize {
        self.window + self.feature_windows.iter().max().map_or(0, |w| w - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSlots {
    pub input: usize,
    /// `4h x input`, gate blocks ordered input, forget, candidate, output.
    pub w: Range<usize>,
    /// `4h x h`
    pub u: Range<usize>,
    /// `4h`
    pub b: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub hidden: usize,
    pub outputs: usize,
    pub layers: Vec<LayerSlots>,
    /// `outputs x hidden`
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(input_width: usize, hidden: usize, layers: usize, outputs: usize) -> Self {
        let mut offset = 0;
        let mut take = |len: usize| {
            let r = offset..offset + len;
            offset += len;
            r
        };
        let layers = (0..layers)
            .map(|l| {
                let input = if l == 0 { input_width } else { hidden };
                LayerSlots {
                    input,
                    w: take(4 * hidden * input),
                    u: take(4 * hidden * hidden),
                    b: take(4 * hidden),
                }
            })
            .collect();
        let head_w = take(outputs * hidden);
        let head_b = take(outputs);
        Layout {
            hidden,
            outputs,
            layers,
            head_w,
            head_b,
            total: offset,
        }
    }

    fn tensors(&self) -> Vec<(String, Vec<usize>, Range<usize>)> {
        let h = self.hidden;
        let mut out = Vec::new();
        for (l, slots) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w"), vec![4 * h, slots.input], slots.w.clone()));
            out.push((format!("layer{l}.u"), vec![4 * h, h], slots.u.clone()));
            out.push((format!("layer{l}.b"), vec![4 * h], slots.b.clone()));
        }
        out.push(("head.w".into(), vec![self.outputs, h], self.head_w.clone()));
        out.push(("head.b".into(), vec![self.outputs], self.head_b.clone()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct LstmModel {
    config: LstmConfig,
    scaler: ScalerParams,
    layout: Layout,
    params: Vec<f64>,
}

impl LstmModel {
    /// Fresh parameters: uniform in ±1/√fan_in per matrix, zero biases except
    /// the forget gate at 1.
    pub fn init<R: Rng>(config: LstmConfig, scaler: ScalerParams, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if scaler.width() != config.input_width() {
            return Err(Error::DimensionMismatch {
                what: "scaler width",
                expected: config.input_width(),
                found: scaler.width(),
            });
        }
        let layout = Layout::new(config.input_width(), config.hidden, config.layers, config.horizon);
        let mut params = vec![0.0; layout.total];
        let h = layout.hidden;
        let mut fill = |range: Range<usize>, fan_in: usize, params: &mut [f64]| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut params[range] {
                *v = rng.random_range(-bound..bound);
            }
        };
        for slots in &layout.layers {
            fill(slots.w.clone(), slots.input, &mut params);
            fill(slots.u.clone(), h, &mut params);
            for v in &mut params[slots.b.start + h..slots.b.start + 2 * h] {
                *v = 1.0;
            }
        }
        fill(layout.head_w.clone(), h, &mut params);
        Ok(LstmModel {
            config,
            scaler,
            layout,
            params,
        })
    }

    /// Builds a model from explicit parameters laid out per [`Layout`].
    pub fn from_params(config: LstmConfig, scaler: ScalerParams, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config.input_width(), config.hidden, config.layers, config.horizon);
        if params.len() != layout.total {
            return Err(Error::DimensionMismatch {
                what: "parameter count",
                expected: layout.total,
                found: params.len(),
            });
        }
        if scaler.width() != config.input_width() {
            return Err(Error::DimensionMismatch {
                what: "scaler width",
                expected: config.input_width(),
                found: scaler.width(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        Ok(LstmModel {
            config,
            scaler,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }

    pub fn scaler(&self) -> &ScalerParams {
        &self.scaler
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn history_len(&self) -> usize {
        self.config.history_len()
    }

    /// Forecasts `H` raw prices from the last [`history_len`](Self::history_len) raw mid-prices.
    pub fn predict(&self, recent: &[f64]) -> Result<Vec<f64>> {
        if recent.len() != self.history_len() {
            return Err(Error::DimensionMismatch {
                what: "prediction history",
                expected: self.history_len(),
                found: recent.len(),
            });
        }
        if recent.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("prediction history contains non-finite values"));
        }
        let rows = channel_rows(recent, &self.config.feature_windows)?;
        let scaled = apply_scaler(&self.scaler, &rows, Direction::Forward)?;
        let flat: Vec<f64> = scaled.into_iter().flatten().collect();
        let (out, _) = lstm_forward(self, &flat, Mode::Infer)?;
        Ok(out.into_iter().map(|z| self.scaler.inverse(0, z)).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: u32,
    config: LstmConfig,
    scaler: ScalerParams,
    tensors: Vec<TensorDoc>,
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl From<LstmModel> for ModelDoc {
    fn from(model: LstmModel) -> Self {
        let tensors = model
            .layout
            .tensors()
            .into_iter()
            .map(|(name, shape, range)| TensorDoc {
                name,
                shape,
                data: model.params[range].to_vec(),
            })
            .collect();
        ModelDoc {
            version: MODEL_FORMAT_VERSION,
            config: model.config,
            scaler: model.scaler,
            tensors,
        }
    }
}

impl TryFrom<ModelDoc> for LstmModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported LSTM model version {}",
                doc.version
            )));
        }
        let config = doc.config;
        let layout = Layout::new(config.input_width(), config.hidden, config.layers, config.horizon);
        let expected = layout.tensors();
        if expected.len() != doc.tensors.len() {
            return Err(Error::DimensionMismatch {
                what: "tensor count",
                expected: expected.len(),
                found: doc.tensors.len(),
            });
        }
        let mut params = vec![0.0; layout.total];
        for ((name, shape, range), tensor) in expected.into_iter().zip(doc.tensors) {
            if tensor.name != name || tensor.shape != shape || tensor.data.len() != range.len() {
                return Err(Error::invalid(format!(
                    "tensor `{}` {:?} does not match expected `{name}` {shape:?}",
                    tensor.name, tensor.shape
                )));
            }
            params[range].copy_from_slice(&tensor.data);
        }
        LstmModel::from_params(config, doc.scaler, params)
    }
}

/// Per-step input channels for a raw mid-price history: the price followed by
/// trailing mean and population std for each feature window. Rows start at
/// the first index where every window is full.
pub fn channel_rows(raw: &[f64], feature_windows: &[usize]) -> Result<Vec<Vec<f64>>> {
    let widest = feature_windows.iter().copied().max().unwrap_or(1);
    if feature_windows.contains(&0) {
        return Err(Error::invalid("feature windows must be positive"));
    }
    if raw.len() < widest {
        return Err(Error::invalid(format!(
            "need at least {widest} values for rolling features, got {}",
            raw.len()
        )));
    }
    Ok((widest - 1..raw.len())
        .map(|t| {
            let mut row = Vec::with_capacity(1 + 2 * feature_windows.len());
            row.push(raw[t]);
            for &w in feature_windows {
                let span = &raw[t + 1 - w..=t];
                let n = w as f64;
                let mean = span.iter().sum::<f64>() / n;
                let var = span.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                row.push(mean);
                row.push(var.sqrt());
            }
            row
        })
        .collect())
}

/// Scales a raw training series, windows it, and trains a model on it.
pub fn fit_forecaster(train_mid: &[f64], config: &LstmConfig) -> Result<(LstmModel, Vec<EpochLoss>)> {
    config.validate()?;
    let rows = channel_rows(train_mid, &config.feature_windows)?;
    let scaler = fit_scaler(&rows)?;
    let scaled = apply_scaler(&scaler, &rows, Direction::Forward)?;
    let dataset = build_windows_rows(&scaled, config.window, config.horizon)?;
    let held_out = (dataset.len() as f64 * config.validation_fraction).floor() as usize;
    if held_out > 0 && held_out < dataset.len() {
        let (fit_part, validation) = dataset.split_tail(held_out);
        train(config, &scaler, &fit_part, Some(&validation))
    } else {
        train(config, &scaler, &dataset, None)
    }
}
