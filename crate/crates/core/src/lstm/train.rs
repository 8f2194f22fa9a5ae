use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::loss::loss_and_gradient;
use super::network::{compute_gradients, forward_with_masks};
use super::{LstmConfig, LstmModel, WindowedDataset};
use crate::error::{Error, Result};
use crate::market_data::ScalerParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Sample-weighted mean of the training batch losses (dropout active).
    pub train: f64,
    pub validation: Option<f64>,
}

fn evaluate(model: &LstmModel, data: &WindowedDataset) -> Result<f64> {
    let kind = model.config().loss;
    let mut total = 0.0;
    for i in 0..data.len() {
        let cache = forward_with_masks(model, data.input(i), None)?;
        total += loss_and_gradient(&cache.output, data.target(i), data.anchor(i), kind, None);
    }
    Ok(total / data.len() as f64)
}

/// Mini-batch Adam training, fully determined by `config.seed`.
///
/// The sample order is reshuffled every epoch and the final partial batch is
/// kept. A batch whose gradient is exactly zero (possible under the
/// directional loss when every direction is right) skips the optimizer step.
pub fn train(
    config: &LstmConfig,
    scaler: &ScalerParams,
    dataset: &WindowedDataset,
    validation: Option<&WindowedDataset>,
) -> Result<(LstmModel, Vec<EpochLoss>)> {
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset has no samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = LstmModel::init(config.clone(), scaler.clone(), &mut rng)?;
    let mut adam = AdamState::new(model.layout().total);
    let hyper = AdamHyper::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mask_seed = rng.random::<u64>();
            let step =
                compute_gradients(&model, dataset, batch, config.loss, Some(mask_seed)).map_err(|e| match e {
                    Error::NonFiniteLoss { .. } => Error::Diverged { epoch },
                    other => other,
                })?;
            loss_sum += step.loss * batch.len() as f64;
            if step.grads.iter().all(|&g| g == 0.0) {
                continue;
            }
            adam_step(model.params_mut(), &step.grads, &mut adam, config.learning_rate, hyper)?;
        }
        let train = loss_sum / dataset.len() as f64;
        if !train.is_finite() || model.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let validation = validation.map(|v| evaluate(&model, v)).transpose()?;
        curve.push(EpochLoss {
            epoch,
            train,
            validation,
        });
    }
    Ok((model, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{build_windows, LossKind};

    fn config(epochs: usize, seed: u64) -> LstmConfig {
        LstmConfig {
            window: 6,
            horizon: 1,
            layers: 1,
            hidden: 4,
            dropout_rate: 0.1,
            batch_size: 8,
            epochs,
            seed,
            ..LstmConfig::default()
        }
    }

    fn data() -> WindowedDataset {
        let seq: Vec<f64> = (0..60).map(|i| (i as f64 * 0.3).sin()).collect();
        build_windows(&seq, 6, 1).unwrap()
    }

    fn scaler() -> ScalerParams {
        ScalerParams {
            mean: vec![0.0],
            std: vec![1.0],
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let cfg = config(0, 4);
        let (model, curve) = train(&cfg, &scaler(), &data(), None).unwrap();
        assert!(curve.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fresh = LstmModel::init(cfg, scaler(), &mut rng).unwrap();
        assert_eq!(model, fresh);
    }

    #[test]
    fn same_seed_same_curve() {
        let d = data();
        let (m1, c1) = train(&config(5, 9), &scaler(), &d, Some(&d)).unwrap();
        let (m2, c2) = train(&config(5, 9), &scaler(), &d, Some(&d)).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(m1.params(), m2.params());
        let (_, c3) = train(&config(5, 10), &scaler(), &d, None).unwrap();
        assert_ne!(c1[4].train, c3[4].train);
        assert!(c1.iter().all(|e| e.validation.is_some()));
    }

    #[test]
    fn training_reduces_loss() {
        let d = data();
        let (_, curve) = train(&config(60, 1), &scaler(), &d, Some(&d)).unwrap();
        let first = curve[0].validation.unwrap();
        let last = curve.last().unwrap().validation.unwrap();
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn directional_training_runs() {
        let d = data();
        let cfg = LstmConfig {
            loss: LossKind::Directional,
            ..config(5, 2)
        };
        let (_, curve) = train(&cfg, &scaler(), &d, None).unwrap();
        assert_eq!(curve.len(), 5);
        assert!(curve.iter().all(|e| e.train.is_finite() && e.train >= 0.0));
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut d = data();
        d.targets_mut()[3] = f64::NAN;
        match train(&config(2, 1), &scaler(), &d, None) {
            Err(Error::Diverged { epoch }) => assert_eq!(epoch, 0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
