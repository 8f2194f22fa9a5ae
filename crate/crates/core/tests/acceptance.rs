//! Acceptance criteria, one PASS/FAIL line each. Pass criterion ids such as
//! `AC5` as arguments to run a subset.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use stockcast::arima::{auto_arima, ArimaGrid, ArimaOrder, Criterion};
use stockcast::harness::{
    sweep_grid, walk_forward_eval, Forecaster, Persistence, DEFAULT_SWEEP_HORIZONS, DEFAULT_SWEEP_WINDOWS,
};
use stockcast::lstm::{compute_loss, fit_forecaster, LossKind, LstmConfig};
use stockcast::market_data::{split_train_test, OhlcBar, PriceSeries};
use stockcast::trader::{hold_strategy, optimize_portfolio, run_backtest, PortfolioState};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lp_oracle_equivalence() -> Outcome {
    let mut rng = common::rng(1);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        let n = rng.random_range(2..=6);
        let prices: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..500.0)).collect();
        let predicted: Vec<f64> = match trial % 10 {
            // exact ties between assets
            0 => prices.iter().map(|x| x * 1.05).collect(),
            // nothing predicted to rise
            1 => prices.iter().map(|x| x * rng.random_range(0.8..=1.0)).collect(),
            _ => prices.iter().map(|x| x * (1.0 + rng.random_range(-0.2..0.2))).collect(),
        };
        let state = PortfolioState::all_cash(n, 1000.0);
        let d = optimize_portfolio(&prices, &predicted, &state).map_err(|e| e.to_string())?;
        let (best, _) = common::lp_oracle(&prices, &predicted, 1000.0);
        let gap = (d.expected_return - best).abs();
        worst = worst.max(gap);
        check(gap < 1e-9, || {
            format!("trial {trial}: objective {} vs oracle {best}", d.expected_return)
        })?;
        let achieved: f64 = d
            .new_shares
            .iter()
            .zip(&predicted)
            .zip(&prices)
            .map(|((s, xh), x)| s * (xh - x))
            .sum();
        check((achieved - d.expected_return).abs() < 1e-9, || {
            format!("trial {trial}: reported objective is not achieved")
        })?;
        check(d.new_shares.iter().all(|&s| s >= 0.0) && d.new_cash >= 0.0, || {
            format!("trial {trial}: negative holding")
        })?;
        check(d.state().net_worth(&prices) == 1000.0, || {
            format!("trial {trial}: wealth {} after rebalance", d.state().net_worth(&prices))
        })?;
    }
    Ok(format!("1000 instances, max objective gap {worst:.1e}, budget exact"))
}

fn gradient_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        for kind in [LossKind::Mse, LossKind::Directional] {
            let err = common::gradcheck::gradient_error(1000 + seed, kind);
            worst = worst.max(err);
            check(err < 1e-4, || format!("model {seed} {kind}: relative error {err:.2e}"))?;
        }
    }
    Ok(format!("20 models x 2 losses, max relative error {worst:.2e}"))
}

fn directional_semantics() -> Outcome {
    let mut rng = common::rng(3);
    let (mut masked, mut zero, mut boundary) = (0, 0, 0);
    for i in 0..10_000 {
        let xt: f64 = rng.random_range(1.0..200.0);
        let mut next: f64 = xt * (1.0 + rng.random_range(-0.1..0.1));
        let mut pred: f64 = xt * (1.0 + rng.random_range(-0.1..0.1));
        match i % 10 {
            0 => pred = xt,
            1 => next = xt,
            _ => {}
        }
        let product = (next - xt) * (pred - xt);
        let d = compute_loss(&[pred], &[next], xt, LossKind::Directional).map_err(|e| e.to_string())?;
        let m = compute_loss(&[pred], &[next], xt, LossKind::Mse).map_err(|e| e.to_string())?;
        if product < 0.0 {
            masked += 1;
            check(d.to_bits() == m.to_bits(), || {
                format!("({xt}, {next}, {pred}): {d} != mse {m}")
            })?;
        } else {
            if product == 0.0 {
                boundary += 1;
            }
            zero += 1;
            check(d == 0.0, || format!("({xt}, {next}, {pred}): expected 0, got {d}"))?;
        }
    }
    Ok(format!(
        "10000 triples: {masked} equal to mse, {zero} zero ({boundary} on the boundary)"
    ))
}

fn arima_recovery() -> Outcome {
    let grid = ArimaGrid::default();
    let mut ar_hits = 0;
    for seed in 0..20 {
        let y = common::ar_series(500 + seed, &[0.5, 0.3], 2000);
        let m = auto_arima(&y, grid, Criterion::Bic).map_err(|e| e.to_string())?;
        if m.order == ArimaOrder::new(2, 0, 0)
            && (m.ar_coeffs[0] - 0.5).abs() <= 0.1
            && (m.ar_coeffs[1] - 0.3).abs() <= 0.1
        {
            ar_hits += 1;
        }
    }
    let mut noise_hits = 0;
    for seed in 0..20 {
        let y = common::gaussian(700 + seed, 500, 1.0);
        let m = auto_arima(&y, grid, Criterion::Bic).map_err(|e| e.to_string())?;
        if m.order == ArimaOrder::new(0, 0, 0) {
            noise_hits += 1;
        }
    }
    let detail = format!("AR(2) recovered {ar_hits}/20, white noise (0,0,0) {noise_hits}/20");
    check(ar_hits >= 18 && noise_hits >= 18, || detail.clone())?;
    Ok(detail)
}

fn lstm_learning() -> Outcome {
    let mids = common::sine(2000, 50.0, 100.0, 10.0);
    let series = common::series("SINE", &mids);
    let test_len = 400;
    let (train, _) = split_train_test(&series, test_len).map_err(|e| e.to_string())?;
    let baseline = walk_forward_eval(&Persistence, &series, test_len, 20, 1)
        .map_err(|e| e.to_string())?
        .mse_raw;
    let mut wins = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let config = LstmConfig {
            window: 20,
            horizon: 1,
            layers: 1,
            hidden: 8,
            dropout_rate: 0.1,
            batch_size: 64,
            epochs: 200,
            seed,
            ..LstmConfig::default()
        };
        let (model, _) = fit_forecaster(train.mid(), &config).map_err(|e| e.to_string())?;
        let mse = walk_forward_eval(&model, &series, test_len, model.history_len(), 1)
            .map_err(|e| e.to_string())?
            .mse_raw;
        worst = worst.max(mse);
        if mse < baseline {
            wins += 1;
        }
    }
    let detail = format!("{wins}/10 seeds beat persistence ({baseline:.4}); worst lstm mse {worst:.4}");
    check(wins >= 9, || detail.clone())?;
    Ok(detail)
}

fn market(rng: &mut impl Rng, assets: usize, days: usize) -> Vec<Vec<f64>> {
    let mut level: Vec<f64> = (0..assets).map(|_| rng.random_range(10.0..300.0)).collect();
    let drift: Vec<f64> = (0..assets).map(|_| rng.random_range(-0.001..0.002)).collect();
    let mut rows = vec![level.clone()];
    for _ in 0..days {
        for (x, mu) in level.iter_mut().zip(&drift) {
            *x *= 1.0 + mu + rng.random_range(-0.03..0.03);
        }
        rows.push(level.clone());
    }
    rows
}

fn backtest_conservation() -> Outcome {
    let mut rng = common::rng(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=6);
        let actuals = market(&mut rng, n, 100);
        let forecasts: Vec<Vec<f64>> = actuals[..100]
            .iter()
            .map(|row| row.iter().map(|x| x * (1.0 + rng.random_range(-0.05..0.05))).collect())
            .collect();
        let r = run_backtest(&forecasts, &actuals, 1000.0).map_err(|e| e.to_string())?;
        for day in &r.days {
            let rel = (day.worth_before - day.worth_after).abs() / day.worth_before;
            worst = worst.max(rel);
            check(rel <= 1e-9, || format!("day {} jumped by {rel:e}", day.day))?;
        }
    }
    let actuals = market(&mut rng, 4, 252);
    let bot = run_backtest(&actuals[1..], &actuals, 1000.0).map_err(|e| e.to_string())?;
    let hold = hold_strategy(1000.0, &actuals).map_err(|e| e.to_string())?;
    let (b, h) = (*bot.net_worth.last().unwrap(), *hold.last().unwrap());
    check(b >= h, || format!("foresight {b:.2} < hold {h:.2}"))?;
    Ok(format!(
        "max rebalance drift {worst:.1e}; 4 assets x 252 days: foresight {b:.2} vs hold {h:.2}"
    ))
}

fn corrupt_after(series: &PriceSeries, cut: usize) -> PriceSeries {
    let bars: Vec<OhlcBar> = series
        .bars()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if i <= cut {
                *b
            } else {
                OhlcBar {
                    open: b.open * 3.0,
                    high: b.high * 5.0,
                    low: b.low * 2.0,
                    close: b.close * 3.0,
                    ..*b
                }
            }
        })
        .collect();
    PriceSeries::new(series.symbol(), bars).unwrap()
}

fn lookahead_free(
    model: &dyn Forecaster,
    series: &PriceSeries,
    test_len: usize,
    context: usize,
) -> Result<usize, String> {
    let horizon = 2;
    let clean = walk_forward_eval(model, series, test_len, context, horizon).map_err(|e| e.to_string())?;
    let first = series.len() - test_len;
    let mut compared = 0;
    for cut in [
        first,
        first + test_len / 3,
        first + test_len / 2,
        series.len() - horizon - 1,
    ] {
        let dirty = walk_forward_eval(model, &corrupt_after(series, cut), test_len, context, horizon)
            .map_err(|e| e.to_string())?;
        for (j, (a, b)) in clean.predictions.iter().zip(&dirty.predictions).enumerate() {
            if first + j <= cut {
                compared += 1;
                let same = a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits());
                check(same, || {
                    format!("prediction for index {} changed after corrupting > {cut}", first + j)
                })?;
            }
        }
    }
    Ok(compared)
}

fn no_lookahead() -> Outcome {
    let noise = common::gaussian(7, 360, 0.4);
    let mids: Vec<f64> = (0..360)
        .map(|t| 80.0 + 0.03 * t as f64 + 4.0 * (t as f64 / 11.0).sin() + noise[t])
        .collect();
    let series = common::series("NLA", &mids);
    let test_len = 60;
    let (train, _) = split_train_test(&series, test_len).map_err(|e| e.to_string())?;
    let grid = ArimaGrid {
        max_p: 3,
        max_d: 1,
        max_q: 2,
    };
    let arima = auto_arima(train.mid(), grid, Criterion::Aic).map_err(|e| e.to_string())?;
    let arima_checked = lookahead_free(&arima, &series, test_len, 50)?;
    let config = LstmConfig {
        window: 12,
        horizon: 2,
        layers: 2,
        hidden: 6,
        epochs: 5,
        batch_size: 32,
        feature_windows: vec![3, 7],
        ..LstmConfig::default()
    };
    let (lstm, _) = fit_forecaster(train.mid(), &config).map_err(|e| e.to_string())?;
    let lstm_checked = lookahead_free(&lstm, &series, test_len, lstm.history_len())?;
    Ok(format!(
        "ARIMA{} {arima_checked} and LSTM {lstm_checked} predictions bitwise unchanged",
        arima.order
    ))
}

fn sweep_shape() -> Outcome {
    let mids: Vec<f64> = (0..700).map(|t| 20.0 + 0.1 * t as f64).collect();
    let series = common::series("TREND", &mids);
    let template = LstmConfig {
        layers: 1,
        hidden: 6,
        dropout_rate: 0.0,
        batch_size: 64,
        epochs: 30,
        seed: 8,
        ..LstmConfig::default()
    };
    let grid = sweep_grid(&series, 100, &DEFAULT_SWEEP_WINDOWS, &DEFAULT_SWEEP_HORIZONS, &template);
    check(grid.cells.len() == 63, || format!("{} cells", grid.cells.len()))?;
    let failed = grid.cells.iter().filter(|c| c.mse.is_none()).count();
    check(failed == 0, || format!("{failed} cells failed"))?;
    let h1 = grid.cell(50, 1).and_then(|c| c.mse).ok_or("missing (50,1)")?;
    let h9 = grid.cell(50, 9).and_then(|c| c.mse).ok_or("missing (50,9)")?;
    check(h1 <= h9, || format!("mse(50,1) {h1:.4} > mse(50,9) {h9:.4}"))?;
    Ok(format!("63 cells; mse(50,1) {h1:.4} <= mse(50,9) {h9:.4}"))
}

fn run_pipeline(dir: &Path) -> Result<(), String> {
    let wave = common::sine(160, 23.0, 0.0, 5.0);
    for (sym, seed) in [("AAA", 31u64), ("BBB", 32)] {
        let mids: Vec<f64> = common::random_walk(seed, 160)
            .iter()
            .zip(&wave)
            .map(|(r, w)| 90.0 + r + w)
            .collect();
        fs::write(dir.join(format!("{sym}.csv")), common::csv_text(&mids)).map_err(|e| e.to_string())?;
    }
    let config = "data.AAA = AAA.csv\ndata.BBB = BBB.csv\ntest_len = 30\nwindow = 10\nlayers = 2\nhidden = 5\nepochs = 15\nbatch_size = 32\nseed = 42\narima.max_p = 2\narima.max_d = 1\narima.max_q = 1\narima.context = 40\n";
    fs::write(dir.join("run.cfg"), config).map_err(|e| e.to_string())?;
    let steps: [&[&str]; 5] = [
        &["fit", "--config", "run.cfg", "--model", "arima"],
        &["fit", "--config", "run.cfg", "--model", "lstm-directional"],
        &["eval", "--config", "run.cfg", "--model", "arima"],
        &["eval", "--config", "run.cfg", "--model", "lstm-directional"],
        &["backtest", "--config", "run.cfg", "--decisions"],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_stockcast"))
            .args(args)
            .current_dir(dir)
            .env_remove("STOCKCAST_OUTPUT_DIR")
            .output()
            .map_err(|e| e.to_string())?;
        check(out.status.success(), || {
            format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim())
        })?;
    }
    Ok(())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    let mut names: Vec<String> = fs::read_dir(a.path().join("out"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".manifest.json"))
        .collect();
    names.sort();
    check(names.len() == 5, || format!("expected 5 manifests, found {names:?}"))?;
    for name in &names {
        let x = fs::read(a.path().join("out").join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.path().join("out").join(name)).map_err(|e| e.to_string())?;
        check(x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} manifests byte-identical across two runs", names.len()))
}

struct Check {
    id: &'static str,
    title: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Check {
            id: "AC1",
            title: "LP oracle equivalence",
            limit: Some(Duration::from_secs(10)),
            run: lp_oracle_equivalence,
        },
        Check {
            id: "AC2",
            title: "gradient correctness",
            limit: Some(Duration::from_secs(60)),
            run: gradient_correctness,
        },
        Check {
            id: "AC3",
            title: "directional loss semantics",
            limit: None,
            run: directional_semantics,
        },
        Check {
            id: "AC4",
            title: "ARIMA order recovery",
            limit: Some(Duration::from_secs(120)),
            run: arima_recovery,
        },
        Check {
            id: "AC5",
            title: "LSTM learning sanity",
            limit: Some(Duration::from_secs(300)),
            run: lstm_learning,
        },
        Check {
            id: "AC6",
            title: "backtest conservation and dominance",
            limit: None,
            run: backtest_conservation,
        },
        Check {
            id: "AC7",
            title: "no lookahead",
            limit: None,
            run: no_lookahead,
        },
        Check {
            id: "AC8",
            title: "sweep shape",
            limit: Some(Duration::from_secs(900)),
            run: sweep_shape,
        },
        Check {
            id: "AC9",
            title: "determinism",
            limit: None,
            run: determinism,
        },
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC")).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for c in criteria
        .iter()
        .filter(|c| wanted.is_empty() || wanted.iter().any(|w| w == c.id))
    {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.1?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("[PASS] {} {}: {detail} ({elapsed:.1?})", c.id, c.title),
            Err(reason) => {
                failures += 1;
                println!("[FAIL] {} {}: {reason} ({elapsed:.1?})", c.id, c.title);
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
