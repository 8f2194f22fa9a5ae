//! Daily rebalancing bot and the buy-and-hold baseline.
//!
//! Each day the bot maximizes the predicted gain `s · (x̂ - x)` over share
//! vectors `s ≥ 0` and cash `w ≥ 0` that keep `s·x + w` equal to today's net
//! worth. The feasible set is a simplex whose vertices are "all cash" and
//! "everything in asset i", where the gain is wealth times the relative return
//! `(x̂_i - x_i) / x_i`. The optimum is therefore the asset with the largest
//! positive predicted return, or cash when none is positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    /// Fractional share counts, non-negative.
    pub shares: Vec<f64>,
    pub cash: f64,
}

impl PortfolioState {
    pub fn all_cash(assets: usize, cash: f64) -> Self {
        PortfolioState {
            shares: vec![0.0; assets],
            cash,
        }
    }

    pub fn net_worth(&self, prices: &[f64]) -> f64 {
        self.shares.iter().zip(prices).map(|(s, x)| s * x).sum::<f64>() + self.cash
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeDecision {
    pub new_shares: Vec<f64>,
    pub new_cash: f64,
    /// Objective value: predicted currency gain `s · (x̂ - x)`.
    pub expected_return: f64,
    /// Index of the asset bought, `None` when the bot sits in cash.
    pub asset: Option<usize>,
}

impl TradeDecision {
    pub fn state(&self) -> PortfolioState {
        PortfolioState {
            shares: self.new_shares.clone(),
            cash: self.new_cash,
        }
    }
}

fn check_prices(prices: &[f64], what: &'static str, expected: usize) -> Result<()> {
    if prices.len() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found: prices.len(),
        });
    }
    if let Some(bad) = prices.iter().find(|x| !x.is_finite() || **x <= 0.0) {
        return Err(Error::invalid(format!("{what} must be finite and positive, got {bad}")));
    }
    Ok(())
}

pub fn optimize_portfolio(prices: &[f64], predicted: &[f64], state: &PortfolioState) -> Result<TradeDecision> {
    let n = prices.len();
    if n == 0 {
        return Err(Error::invalid("no assets"));
    }
    check_prices(prices, "current prices", n)?;
    if predicted.len() != n {
        return Err(Error::DimensionMismatch {
            what: "predicted prices",
            expected: n,
            found: predicted.len(),
        });
    }
    if predicted.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("predicted prices must be finite"));
    }
    if state.shares.len() != n {
        return Err(Error::DimensionMismatch {
            what: "portfolio shares",
            expected: n,
            found: state.shares.len(),
        });
    }
    let wealth = state.net_worth(prices);

    let mut best: Option<(usize, f64)> = None;
    for (i, (&x, &x_hat)) in prices.iter().zip(predicted).enumerate() {
        let r = (x_hat - x) / x;
        if r > best.map_or(0.0, |(_, b)| b) {
            best = Some((i, r));
        }
    }
    let mut new_shares = vec![0.0; n];
    Ok(match best {
        Some((i, _)) => {
            // step down until the position's value does not exceed wealth, so the
            // leftover below is exact and non-negative
            let mut s = wealth / prices[i];
            while s > 0.0 && s * prices[i] > wealth {
                s = f64::from_bits(s.to_bits() - 1);
            }
            new_shares[i] = s;
            TradeDecision {
                expected_return: s * (predicted[i] - prices[i]),
                new_shares,
                new_cash: wealth - s * prices[i],
                asset: Some(i),
            }
        }
        None => TradeDecision {
            new_shares,
            new_cash: wealth,
            expected_return: 0.0,
            asset: None,
        },
    })
}

/// Net worth of an equal-weight portfolio bought at `prices[0]` and never traded.
pub fn hold_strategy<R: AsRef<[f64]>>(initial_wealth: f64, prices: &[R]) -> Result<Vec<f64>> {
    let first = prices
        .first()
        .ok_or_else(|| Error::Empty("price matrix has no rows".into()))?
        .as_ref();
    let n = first.len();
    if n == 0 {
        return Err(Error::invalid("no assets"));
    }
    for row in prices {
        check_prices(row.as_ref(), "hold prices", n)?;
    }
    let shares: Vec<f64> = first.iter().map(|x| initial_wealth / n as f64 / x).collect();
    let holding = PortfolioState { shares, cash: 0.0 };
    Ok(prices.iter().map(|row| holding.net_worth(row.as_ref())).collect())
}

/// One rebalancing day of a backtest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayRecord {
    pub day: usize,
    pub worth_before: f64,
    pub worth_after: f64,
    pub decision: TradeDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestResult {
    /// `T + 1` values; entry `t+1` is marked at `actuals[t+1]`.
    pub net_worth: Vec<f64>,
    pub days: Vec<DayRecord>,
}

/// Runs the bot from all-cash over `T` days.
///
/// `forecasts[t]` is the prediction for day `t+1` made on day `t`; realized
/// wealth is always marked at the actual next-day prices.
pub fn run_backtest<F: AsRef<[f64]>, A: AsRef<[f64]>>(
    forecasts: &[F],
    actuals: &[A],
    initial_wealth: f64,
) -> Result<BacktestResult> {
    if actuals.len() != forecasts.len() + 1 {
        return Err(Error::DimensionMismatch {
            what: "actual price rows",
            expected: forecasts.len() + 1,
            found: actuals.len(),
        });
    }
    if !(initial_wealth >= 0.0 && initial_wealth.is_finite()) {
        return Err(Error::invalid("initial wealth must be finite and non-negative"));
    }
    let n = actuals[0].as_ref().len();
    if n == 0 {
        return Err(Error::invalid("no assets"));
    }
    for row in actuals {
        check_prices(row.as_ref(), "actual prices", n)?;
    }
    let mut state = PortfolioState::all_cash(n, initial_wealth);
    let mut net_worth = Vec::with_capacity(actuals.len());
    let mut days = Vec::with_capacity(forecasts.len());
    net_worth.push(initial_wealth);
    for (t, forecast) in forecasts.iter().enumerate() {
        let today = actuals[t].as_ref();
        let decision = optimize_portfolio(today, forecast.as_ref(), &state)?;
        let worth_before = state.net_worth(today);
        state = decision.state();
        let worth_after = state.net_worth(today);
        net_worth.push(state.net_worth(actuals[t + 1].as_ref()));
        days.push(DayRecord {
            day: t,
            worth_before,
            worth_after,
            decision,
        });
    }
    Ok(BacktestResult { net_worth, days })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cash(v: f64) -> PortfolioState {
        PortfolioState::all_cash(2, v)
    }

    #[test]
    fn buys_best_predicted_asset() {
        let d = optimize_portfolio(&[10.0, 20.0], &[11.0, 19.0], &cash(1000.0)).unwrap();
        assert_eq!(d.new_shares, vec![100.0, 0.0]);
        assert_eq!(d.new_cash, 0.0);
        assert!((d.expected_return - 100.0).abs() < 1e-12);
        assert_eq!(d.asset, Some(0));
    }

    #[test]
    fn stays_in_cash_when_nothing_rises() {
        let d = optimize_portfolio(&[10.0, 20.0], &[9.0, 19.0], &cash(1000.0)).unwrap();
        assert_eq!(d.new_shares, vec![0.0, 0.0]);
        assert_eq!(d.new_cash, 1000.0);
        assert_eq!(d.asset, None);
        let flat = optimize_portfolio(&[10.0, 20.0], &[10.0, 20.0], &cash(1000.0)).unwrap();
        assert_eq!(flat.asset, None);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let d = optimize_portfolio(&[10.0, 20.0], &[11.0, 22.0], &cash(1000.0)).unwrap();
        assert_eq!(d.asset, Some(0));
        assert_eq!(d.new_shares, vec![100.0, 0.0]);
    }

    #[test]
    fn rejects_bad_prices() {
        assert!(optimize_portfolio(&[0.0, 1.0], &[1.0, 1.0], &cash(1.0)).is_err());
        assert!(optimize_portfolio(&[-1.0, 1.0], &[1.0, 1.0], &cash(1.0)).is_err());
        assert!(optimize_portfolio(&[1.0, 1.0], &[1.0], &cash(1.0)).is_err());
    }

    #[test]
    fn rebalances_existing_holdings() {
        let state = PortfolioState {
            shares: vec![10.0, 0.0],
            cash: 100.0,
        };
        let d = optimize_portfolio(&[10.0, 50.0], &[9.0, 60.0], &state).unwrap();
        assert_eq!(d.new_shares, vec![0.0, 4.0]);
    }

    #[test]
    fn hold_examples() {
        let doubled = hold_strategy(1000.0, &[vec![10.0, 40.0], vec![20.0, 80.0]]).unwrap();
        assert_eq!(doubled, vec![1000.0, 2000.0]);
        let flat = hold_strategy(1000.0, &vec![vec![5.0, 7.0]; 4]).unwrap();
        assert!(flat.iter().all(|&v| (v - 1000.0).abs() < 1e-9));
        let single = hold_strategy(1000.0, &[vec![4.0], vec![5.0]]).unwrap();
        assert_eq!(single, vec![1000.0, 1000.0 / 4.0 * 5.0]);
    }

    #[test]
    fn perfect_foresight_compounds() {
        let actuals = [vec![100.0], vec![110.0], vec![121.0]];
        let r = run_backtest(&actuals[1..], &actuals, 1000.0).unwrap();
        assert_eq!(r.net_worth.len(), 3);
        assert!((r.net_worth[1] - 1100.0).abs() < 1e-9);
        assert!((r.net_worth[2] - 1210.0).abs() < 1e-9);
    }

    #[test]
    fn pessimist_stays_flat() {
        let actuals = [vec![100.0], vec![150.0], vec![90.0], vec![200.0]];
        let forecasts = [vec![1.0], vec![1.0], vec![1.0]];
        let r = run_backtest(&forecasts, &actuals, 1000.0).unwrap();
        assert_eq!(r.net_worth, vec![1000.0; 4]);
    }

    #[test]
    fn backtest_shape_checked() {
        let actuals = [vec![1.0], vec![2.0]];
        assert!(run_backtest(&actuals, &actuals, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn decision_conserves_wealth(
            prices in prop::collection::vec(0.1f64..500.0, 1..7),
            moves in prop::collection::vec(-0.5f64..0.5, 7),
            held in prop::collection::vec(0.0f64..20.0, 7),
            cash in 0.0f64..2000.0,
        ) {
            let n = prices.len();
            let predicted: Vec<f64> = prices.iter().zip(&moves).map(|(x, m)| x * (1.0 + m)).collect();
            let state = PortfolioState { shares: held[..n].to_vec(), cash };
            let d = optimize_portfolio(&prices, &predicted, &state).unwrap();
            let before = state.net_worth(&prices);
            let after = d.state().net_worth(&prices);
            prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
            prop_assert!(d.new_shares.iter().all(|&s| s >= 0.0) && d.new_cash >= 0.0);
        }

        #[test]
        fn argmax_is_scale_invariant(
            prices in prop::collection::vec(0.1f64..500.0, 2..7),
            moves in prop::collection::vec(-0.5f64..0.5, 7),
            which in 0usize..7,
            factor in 0.01f64..100.0,
        ) {
            let n = prices.len();
            let predicted: Vec<f64> = prices.iter().zip(&moves).map(|(x, m)| x * (1.0 + m)).collect();
            let base = optimize_portfolio(&prices, &predicted, &cash_n(n)).unwrap();
            let k = which % n;
            let mut p2 = prices.clone();
            let mut f2 = predicted.clone();
            p2[k] *= factor;
            f2[k] *= factor;
            let scaled = optimize_portfolio(&p2, &f2, &cash_n(n)).unwrap();
            // relative returns are unchanged up to rounding; only exact near-ties may flip
            let r = |i: usize| moves[i];
            match (base.asset, scaled.asset) {
                (a, b) if a == b => {}
                (Some(a), Some(b)) => prop_assert!((r(a) - r(b)).abs() < 1e-12),
                (Some(a), None) | (None, Some(a)) => prop_assert!(r(a).abs() < 1e-12),
                _ => unreachable!(),
            }
        }
    }

    fn cash_n(n: usize) -> PortfolioState {
        PortfolioState::all_cash(n, 1000.0)
    }
}
