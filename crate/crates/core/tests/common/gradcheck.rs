use rand::Rng;
use stockcast::lstm::{
    build_windows_rows, channel_rows, compute_gradients, LossKind, LstmConfig, LstmModel, WindowedDataset,
};
use stockcast::market_data::{apply_scaler, Direction, ScalerParams};

pub const FD_EPS: f64 = 1e-5;

/// Relative error floor: below this magnitude both gradients are treated as
/// absolute differences, since central differences carry roughly
/// `1e-16 / eps` of rounding noise.
pub const REL_FLOOR: f64 = 1e-6;

struct Case {
    model: LstmModel,
    data: WindowedDataset,
    batch: Vec<usize>,
    mask_seed: u64,
}

fn random_case(seed: u64, kind: LossKind) -> Case {
    let mut rng = super::rng(seed);
    let feature_windows = if rng.random_bool(0.3) { vec![2] } else { vec![] };
    let config = LstmConfig {
        window: rng.random_range(3..=6),
        horizon: rng.random_range(1..=3),
        layers: rng.random_range(1..=2),
        hidden: rng.random_range(2..=4),
        dropout_rate: if rng.random_bool(0.5) { 0.25 } else { 0.0 },
        loss: kind,
        feature_windows,
        ..LstmConfig::default()
    };
    let scaler = ScalerParams {
        mean: vec![0.0; config.input_width()],
        std: vec![1.0; config.input_width()],
    };
    let mut model = LstmModel::init(config.clone(), scaler.clone(), &mut rng).unwrap();
    // spread the weights a little beyond the init range so gates are not all near 0.5
    for p in model.params_mut() {
        *p *= 1.5;
    }
    let raw: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
    let rows = channel_rows(&raw, &config.feature_windows).unwrap();
    let scaled = apply_scaler(&scaler, &rows, Direction::Forward).unwrap();
    let data = build_windows_rows(&scaled, config.window, config.horizon).unwrap();
    let size = rng.random_range(3..=8).min(data.len());
    let batch: Vec<usize> = (0..size).map(|_| rng.random_range(0..data.len())).collect();
    Case {
        model,
        data,
        batch,
        mask_seed: rng.random(),
    }
}

fn loss(case: &Case, params: &[f64]) -> f64 {
    let mut m = case.model.clone();
    m.params_mut().copy_from_slice(params);
    compute_gradients(&m, &case.data, &case.batch, m.config().loss, Some(case.mask_seed))
        .unwrap()
        .loss
}

/// Max relative error between analytic and central-difference gradients.
pub fn gradient_error(seed: u64, kind: LossKind) -> f64 {
    let case = random_case(seed, kind);
    let analytic = compute_gradients(&case.model, &case.data, &case.batch, kind, Some(case.mask_seed))
        .unwrap()
        .grads;
    let base = case.model.params().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += FD_EPS;
        let mut minus = base.clone();
        minus[i] -= FD_EPS;
        let numeric = (loss(&case, &plus) - loss(&case, &minus)) / (2.0 * FD_EPS);
        let denom = analytic[i].abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
