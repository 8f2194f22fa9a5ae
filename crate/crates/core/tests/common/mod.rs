//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use stockcast::market_data::{OhlcBar, PriceSeries};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(seed: u64, n: usize, sd: f64) -> Vec<f64> {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| normal.sample(&mut r)).collect()
}

/// Zero-mean AR(p) with unit-variance shocks and a 500-step burn-in.
pub fn ar_series(seed: u64, phi: &[f64], n: usize) -> Vec<f64> {
    let burn = 500;
    let e = gaussian(seed, n + burn, 1.0);
    let mut y = vec![0.0; n + burn];
    for t in 0..n + burn {
        let mut v = e[t];
        for (i, p) in phi.iter().enumerate() {
            if t > i {
                v += p * y[t - 1 - i];
            }
        }
        y[t] = v;
    }
    y.split_off(burn)
}

/// `y_t = e_t + theta * e_{t-1}` with unit-variance shocks.
pub fn ma1_series(seed: u64, theta: f64, n: usize) -> Vec<f64> {
    let e = gaussian(seed, n + 1, 1.0);
    (1..=n).map(|t| e[t] + theta * e[t - 1]).collect()
}

pub fn random_walk(seed: u64, n: usize) -> Vec<f64> {
    let mut level = 0.0;
    gaussian(seed, n, 1.0)
        .into_iter()
        .map(|e| {
            level += e;
            level
        })
        .collect()
}

pub fn sine(n: usize, period: f64, level: f64, amplitude: f64) -> Vec<f64> {
    (0..n)
        .map(|t| level + amplitude * (2.0 * std::f64::consts::PI * t as f64 / period).sin())
        .collect()
}

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap()
}

/// Series whose bars all have the given mid-prices and a fixed 1% range.
pub fn series(symbol: &str, mids: &[f64]) -> PriceSeries {
    let bars = mids
        .iter()
        .enumerate()
        .map(|(i, &m)| OhlcBar {
            date: start_date() + Days::new(i as u64),
            open: m,
            high: m * 1.005,
            low: m * 0.995,
            close: m,
        })
        .collect();
    PriceSeries::new(symbol, bars).unwrap()
}

pub fn csv_text(mids: &[f64]) -> String {
    let mut out = String::from("Date,Open,High,Low,Close,Volume\n");
    for (i, &m) in mids.iter().enumerate() {
        let d = start_date() + Days::new(i as u64);
        out.push_str(&format!("{d},{m},{},{},{m},1000\n", m + 0.5, m - 0.5));
    }
    out
}

/// Least squares of `y` on an intercept and the columns of `x`, by
/// Gauss-Jordan elimination with partial pivoting on the normal equations.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x.first().map_or(0, Vec::len) + 1;
    let mut m = vec![vec![0.0; k + 1]; k];
    for (row, &target) in x.iter().zip(y) {
        let mut z = vec![1.0];
        z.extend_from_slice(row);
        for i in 0..k {
            for j in 0..k {
                m[i][j] += z[i] * z[j];
            }
            m[i][k] += z[i] * target;
        }
    }
    for c in 0..k {
        let pivot = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, pivot);
        let p = m[c][c];
        for v in m[c].iter_mut() {
            *v /= p;
        }
        for r in 0..k {
            if r != c {
                let f = m[r][c];
                let pivot_row = m[c].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.iter().map(|row| row[k]).collect()
}

/// Dense tableau simplex for `max c·z` subject to `A z <= b`, `z >= 0`,
/// `b >= 0`, using Bland's rule. Returns the optimal value and point.
pub fn simplex_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> (f64, Vec<f64>) {
    let n = c.len();
    let m = a.len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for j in 0..n {
        t[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    while let Some(enter) = (0..n + m).find(|&j| t[m][j] < -1e-15) {
        let mut leave = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][enter] > 1e-15 {
                let ratio = t[i][width - 1] / t[i][enter];
                if ratio < best || (ratio == best && leave.is_some_and(|l: usize| basis[i] < basis[l])) {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(r) = leave else {
            panic!("unbounded program");
        };
        let p = t[r][enter];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        for i in 0..=m {
            if i != r {
                let f = t[i][enter];
                if f != 0.0 {
                    let pivot_row = t[r].clone();
                    for (v, pv) in t[i].iter_mut().zip(pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        basis[r] = enter;
    }
    let mut z = vec![0.0; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            z[bv] = t[i][width - 1];
        }
    }
    (t[m][width - 1], z)
}

/// The rebalancing program through the generic simplex: maximize
/// `sum s_i (xhat_i - x_i)` with `sum s_i x_i <= wealth`; cash is the slack.
pub fn lp_oracle(prices: &[f64], predicted: &[f64], wealth: f64) -> (f64, Vec<f64>) {
    let c: Vec<f64> = prices.iter().zip(predicted).map(|(x, xh)| xh - x).collect();
    simplex_max(&c, &[prices.to_vec()], &[wealth])
}

/// Best objective over the vertices of the feasible simplex.
pub fn vertex_oracle(prices: &[f64], predicted: &[f64], wealth: f64) -> f64 {
    prices
        .iter()
        .zip(predicted)
        .map(|(x, xh)| wealth / x * (xh - x))
        .fold(0.0, f64::max)
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}
