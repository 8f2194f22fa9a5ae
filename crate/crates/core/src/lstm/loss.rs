use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    /// Squared error counted only where the predicted move from the anchor
    /// has the opposite sign to the realized move.
    Directional,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "directional" | "custom" => Ok(LossKind::Directional),
            other => Err(Error::invalid(format!("unknown loss `{other}`"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Directional => "directional",
        })
    }
}

/// True when the realized and predicted moves away from `anchor` strictly disagree in sign.
pub fn direction_violated(target: f64, pred: f64, anchor: f64) -> bool {
    (target - anchor) * (pred - anchor) < 0.0
}

pub fn compute_loss(pred: &[f64], target: &[f64], anchor: f64, kind: LossKind) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "loss operands",
            expected: target.len(),
            found: pred.len(),
        });
    }
    Ok(loss_and_gradient(pred, target, anchor, kind, None))
}

/// Loss averaged over the horizon; writes `dL/dpred` into `grad` when given.
pub(crate) fn loss_and_gradient(
    pred: &[f64],
    target: &[f64],
    anchor: f64,
    kind: LossKind,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let h = pred.len() as f64;
    let mut loss = 0.0;
    for (k, (&p, &y)) in pred.iter().zip(target).enumerate() {
        let active = match kind {
            LossKind::Mse => true,
            LossKind::Directional => direction_violated(y, p, anchor),
        };
        let diff = p - y;
        if active {
            loss += diff * diff;
        }
        if let Some(g) = grad.as_deref_mut() {
            g[k] = if active { 2.0 * diff / h } else { 0.0 };
        }
    }
    loss / h
}
