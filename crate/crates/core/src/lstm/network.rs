//! Forward pass and backpropagation through time.
//!
//! Per layer and time step, with gate pre-activations `z = W·x + U·h_prev + b`:
//!
//! ```text
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c = f ⊙ c_prev + i ⊙ g
//! h = o ⊙ tanh(c)
//! ```
//!
//! Each layer's hidden sequence passes through inverted dropout before it
//! feeds the next layer (or the dense head, which reads the last step only).

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::{loss_and_gradient, LossKind};
use super::{LstmModel, WindowedDataset};
use crate::error::{Error, Result};

/// Samples per parallel work unit. Fixed so the reduction order, and hence
/// the floating-point result, does not depend on the thread count.
const CHUNK: usize = 16;

pub enum Mode<'a> {
    /// Dropout masks are drawn from the generator.
    Train(&'a mut dyn RngCore),
    Infer,
}

/// Per-layer `W x hidden` multipliers, each `0` or `1/(1-rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(pub Vec<Vec<f64>>);

impl DropoutMasks {
    pub fn draw<R: Rng + ?Sized>(model: &LstmModel, rng: &mut R) -> Option<Self> {
        let rate = model.config().dropout_rate;
        if rate == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - rate);
        let size = model.config().window * model.layout().hidden;
        let masks = (0..model.layout().layers.len())
            .map(|_| {
                (0..size)
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                    .collect()
            })
            .collect();
        Some(DropoutMasks(masks))
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input sequence seen by each layer, `W x input_width(l)`.
    layer_inputs: Vec<Vec<f64>>,
    /// Gate activations `W x 4h` in order i, f, g, o.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    /// Hidden states before dropout, `W x h`.
    hidden: Vec<Vec<f64>>,
    masks: Option<DropoutMasks>,
    top: Vec<f64>,
    pub output: Vec<f64>,
}

impl ForwardCache {
    /// Pre-dropout hidden sequence of layer `l`.
    pub fn hidden(&self, l: usize) -> &[f64] {
        &self.hidden[l]
    }

    pub fn cells(&self, l: usize) -> &[f64] {
        &self.cells[l]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn lstm_forward(model: &LstmModel, window: &[f64], mode: Mode<'_>) -> Result<(Vec<f64>, ForwardCache)> {
    let masks = match mode {
        Mode::Train(rng) => DropoutMasks::draw(model, rng),
        Mode::Infer => None,
    };
    let cache = forward_with_masks(model, window, masks.as_ref())?;
    Ok((cache.output.clone(), cache))
}

/// Forward pass with explicit dropout masks (`None` disables dropout).
pub fn forward_with_masks(model: &LstmModel, window: &[f64], masks: Option<&DropoutMasks>) -> Result<ForwardCache> {
    let steps = model.config().window;
    let layout = model.layout();
    let h = layout.hidden;
    let width = model.config().input_width();
    if window.len() != steps * width {
        return Err(Error::DimensionMismatch {
            what: "input window",
            expected: steps * width,
            found: window.len(),
        });
    }
    if let Some(m) = masks {
        if m.0.len() != layout.layers.len() || m.0.iter().any(|l| l.len() != steps * h) {
            return Err(Error::invalid("dropout masks do not match the model shape"));
        }
    }
    let params = model.params();
    let n_layers = layout.layers.len();
    let mut cache = ForwardCache {
        layer_inputs: Vec::with_capacity(n_layers),
        gates: Vec::with_capacity(n_layers),
        cells: Vec::with_capacity(n_layers),
        hidden: Vec::with_capacity(n_layers),
        masks: masks.cloned(),
        top: Vec::new(),
        output: Vec::new(),
    };
    let mut input = window.to_vec();
    let mut z = vec![0.0; 4 * h];
    for (l, slots) in layout.layers.iter().enumerate() {
        let in_w = slots.input;
        let wm = &params[slots.w.clone()];
        let um = &params[slots.u.clone()];
        let bias = &params[slots.b.clone()];
        let mut gates = vec![0.0; steps * 4 * h];
        let mut cells = vec![0.0; steps * h];
        let mut hidden = vec![0.0; steps * h];
        for t in 0..steps {
            let x = &input[t * in_w..(t + 1) * in_w];
            z.copy_from_slice(bias);
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += dot(&wm[r * in_w..(r + 1) * in_w], x);
            }
            if t > 0 {
                let h_prev = &hidden[(t - 1) * h..t * h];
                for (r, zr) in z.iter_mut().enumerate() {
                    *zr += dot(&um[r * h..(r + 1) * h], h_prev);
                }
            }
            let gate = &mut gates[t * 4 * h..(t + 1) * 4 * h];
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let g = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                gate[k] = i;
                gate[h + k] = f;
                gate[2 * h + k] = g;
                gate[3 * h + k] = o;
                let c_prev = if t > 0 { cells[(t - 1) * h + k] } else { 0.0 };
                let c = f * c_prev + i * g;
                cells[t * h + k] = c;
                hidden[t * h + k] = o * c.tanh();
            }
        }
        let next: Vec<f64> = match masks {
            Some(m) => hidden.iter().zip(&m.0[l]).map(|(v, k)| v * k).collect(),
            None => hidden.clone(),
        };
        cache.layer_inputs.push(std::mem::replace(&mut input, next));
        cache.gates.push(gates);
        cache.cells.push(cells);
        cache.hidden.push(hidden);
    }
    cache.top = input[(steps - 1) * h..].to_vec();
    let head_w = &params[layout.head_w.clone()];
    let head_b = &params[layout.head_b.clone()];
    cache.output = (0..layout.outputs)
        .map(|j| head_b[j] + dot(&head_w[j * h..(j + 1) * h], &cache.top))
        .collect();
    Ok(cache)
}

/// Accumulates `dL/dθ` into `grads` given `dL/doutput`.
pub fn backward(model: &LstmModel, cache: &ForwardCache, d_output: &[f64], grads: &mut [f64]) {
    let layout = model.layout();
    let params = model.params();
    let steps = model.config().window;
    let h = layout.hidden;

    let head_w = &params[layout.head_w.clone()];
    let mut d_seq = vec![0.0; steps * h];
    {
        let (gw, gb) = (layout.head_w.clone(), layout.head_b.clone());
        for (j, &dy) in d_output.iter().enumerate() {
            grads[gb.start + j] += dy;
            for k in 0..h {
                grads[gw.start + j * h + k] += dy * cache.top[k];
                d_seq[(steps - 1) * h + k] += dy * head_w[j * h + k];
            }
        }
    }

    let mut dz = vec![0.0; 4 * h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    for (l, slots) in layout.layers.iter().enumerate().rev() {
        if let Some(m) = &cache.masks {
            for (d, k) in d_seq.iter_mut().zip(&m.0[l]) {
                *d *= k;
            }
        }
        let in_w = slots.input;
        let wm = &params[slots.w.clone()];
        let um = &params[slots.u.clone()];
        let gates = &cache.gates[l];
        let cells = &cache.cells[l];
        let hidden = &cache.hidden[l];
        let inputs = &cache.layer_inputs[l];
        let mut d_input = if l > 0 { vec![0.0; steps * in_w] } else { Vec::new() };
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        dc_next.iter_mut().for_each(|v| *v = 0.0);

        for t in (0..steps).rev() {
            let gate = &gates[t * 4 * h..(t + 1) * 4 * h];
            for k in 0..h {
                let (i, f, g, o) = (gate[k], gate[h + k], gate[2 * h + k], gate[3 * h + k]);
                let c = cells[t * h + k];
                let c_prev = if t > 0 { cells[(t - 1) * h + k] } else { 0.0 };
                let tc = c.tanh();
                let dh = d_seq[t * h + k] + dh_next[k];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                dc_next[k] = dc * f;
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
            }
            let x = &inputs[t * in_w..(t + 1) * in_w];
            let gw = &mut grads[slots.w.clone()];
            for (r, &d) in dz.iter().enumerate() {
                for (gv, &xv) in gw[r * in_w..(r + 1) * in_w].iter_mut().zip(x) {
                    *gv += d * xv;
                }
            }
            if t > 0 {
                let h_prev = &hidden[(t - 1) * h..t * h];
                let gu = &mut grads[slots.u.clone()];
                for (r, &d) in dz.iter().enumerate() {
                    for (gv, &hv) in gu[r * h..(r + 1) * h].iter_mut().zip(h_prev) {
                        *gv += d * hv;
                    }
                }
            }
            for (gv, &d) in grads[slots.b.clone()].iter_mut().zip(&dz) {
                *gv += d;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &d) in dz.iter().enumerate() {
                if t > 0 {
                    for (acc, &u) in dh_next.iter_mut().zip(&um[r * h..(r + 1) * h]) {
                        *acc += d * u;
                    }
                }
                if l > 0 {
                    let dx = &mut d_input[t * in_w..(t + 1) * in_w];
                    for (acc, &w) in dx.iter_mut().zip(&wm[r * in_w..(r + 1) * in_w]) {
                        *acc += d * w;
                    }
                }
            }
        }
        if l > 0 {
            d_seq = d_input;
        }
    }
}

/// Mean batch loss and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub grads: Vec<f64>,
}

fn sample_masks(model: &LstmModel, mask_seed: Option<u64>, sample: usize) -> Option<DropoutMasks> {
    let seed = mask_seed?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    DropoutMasks::draw(model, &mut rng)
}

/// Exact gradients of the mean loss over `indices`.
///
/// With `mask_seed` set, each sample's dropout masks come from a ChaCha
/// stream keyed by the seed and the sample index, so repeated calls with the
/// same seed see the same masks. `None` runs without dropout.
pub fn compute_gradients(
    model: &LstmModel,
    data: &WindowedDataset,
    indices: &[usize],
    kind: LossKind,
    mask_seed: Option<u64>,
) -> Result<Gradients> {
    if indices.is_empty() {
        return Err(Error::invalid("gradient batch is empty"));
    }
    let cfg = model.config();
    for (what, expected, found) in [
        ("dataset window", cfg.window, data.window()),
        ("dataset horizon", cfg.horizon, data.horizon()),
        ("dataset features", cfg.input_width(), data.features()),
    ] {
        if expected != found {
            return Err(Error::DimensionMismatch { what, expected, found });
        }
    }
    let total = model.layout().total;
    let partials: Vec<Result<(f64, Vec<f64>)>> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = vec![0.0; total];
            let mut loss = 0.0;
            let mut d_out = vec![0.0; cfg.horizon];
            for &i in chunk {
                let masks = sample_masks(model, mask_seed, i);
                let cache = forward_with_masks(model, data.input(i), masks.as_ref())?;
                let l = loss_and_gradient(&cache.output, data.target(i), data.anchor(i), kind, Some(&mut d_out));
                if !l.is_finite() {
                    return Err(Error::NonFiniteLoss { sample: i });
                }
                loss += l;
                if d_out.iter().any(|&d| d != 0.0) {
                    backward(model, &cache, &d_out, &mut grads);
                }
            }
            Ok((loss, grads))
        })
        .collect();

    let scale = 1.0 / indices.len() as f64;
    let mut grads = vec![0.0; total];
    let mut loss = 0.0;
    for part in partials {
        let (l, g) = part?;
        loss += l;
        for (acc, v) in grads.iter_mut().zip(g) {
            *acc += v;
        }
    }
    grads.iter_mut().for_each(|g| *g *= scale);
    Ok(Gradients {
        loss: loss * scale,
        grads,
    })
}
