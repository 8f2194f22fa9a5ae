//! ARIMA(p,d,q) by conditional sum of squares.
//!
//! The model on the `d`-times differenced series `y` is
//!
//! ```text
//! y[t] = c + Σ φ[i]·y[t-i] + Σ θ[j]·e[t-j] + e[t]
//! ```
//!
//! Residuals are computed from `t = p` onwards with every pre-sample residual
//! fixed at zero. Pure autoregressions are solved by ordinary least squares;
//! models with a moving-average part are refined from the AR-only fit by
//! Levenberg-Marquardt on the residual vector, whose Jacobian follows the same
//! recursion as the residuals themselves.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const MAX_ITERATIONS: usize = 500;
const RELATIVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub const fn new(p: usize, d: usize, q: usize) -> Self {
        ArimaOrder { p, d, q }
    }

    /// Intercept plus AR and MA coefficients.
    pub const fn param_count(&self) -> usize {
        1 + self.p + self.q
    }

    /// Smallest undifferenced series length accepted by [`fit_arima`].
    pub const fn min_series_len(&self) -> usize {
        10 * self.param_count() + self.d
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::invalid(format!("unknown criterion `{other}`"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    #[serde(rename = "ar")]
    pub ar_coeffs: Vec<f64>,
    #[serde(rename = "ma")]
    pub ma_coeffs: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    pub n_obs: usize,
    pub sse: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
}

impl ArimaModel {
    pub fn criterion(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }

    /// Shortest history [`arima_forecast`] accepts.
    pub fn min_history(&self) -> usize {
        (self.order.d + self.order.p).max(1)
    }
}

/// Knobs for the iterative CSS refinement.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: MAX_ITERATIONS,
            tolerance: RELATIVE_TOLERANCE,
        }
    }
}

/// Applies first differencing `d` times.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>> {
    if d >= series.len() && d > 0 {
        return Err(Error::invalid(format!(
            "cannot difference {} values {d} times",
            series.len()
        )));
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Gaussian-CSS information criteria: `n·ln(sse/n) + 2k` and `n·ln(sse/n) + k·ln(n)`.
pub fn information_criteria(sse: f64, n_obs: usize, k: usize) -> Result<(f64, f64)> {
    if !(sse.is_finite() && sse > 0.0) {
        return Err(Error::invalid(format!("sum of squares must be positive, got {sse}")));
    }
    if n_obs <= k {
        return Err(Error::invalid(format!(
            "need more observations ({n_obs}) than parameters ({k})"
        )));
    }
    let n = n_obs as f64;
    let k = k as f64;
    let fit = n * (sse / n).ln();
    Ok((fit + 2.0 * k, fit + k * n.ln()))
}

/// One-step conditional residuals `e[p..n]` of a differenced series.
pub fn css_residuals(y: &[f64], intercept: f64, ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let p = ar.len();
    let mut e = vec![0.0; y.len()];
    for t in p..y.len() {
        let mut r = y[t] - intercept;
        for (i, phi) in ar.iter().enumerate() {
            r -= phi * y[t - 1 - i];
        }
        for (j, theta) in ma.iter().enumerate() {
            if t > p + j {
                r -= theta * e[t - 1 - j];
            }
        }
        e[t] = r;
    }
    e.split_off(p.min(y.len()))
}

pub fn conditional_sse(y: &[f64], intercept: f64, ar: &[f64], ma: &[f64]) -> f64 {
    css_residuals(y, intercept, ar, ma).iter().map(|e| e * e).sum()
}

struct Params<'a> {
    p: usize,
    values: &'a [f64],
}

impl Params<'_> {
    fn intercept(&self) -> f64 {
        self.values[0]
    }
    fn ar(&self) -> &[f64] {
        &self.values[1..1 + self.p]
    }
    fn ma(&self) -> &[f64] {
        &self.values[1 + self.p..]
    }
}

fn sse_at(y: &[f64], p: usize, values: &[f64]) -> f64 {
    let params = Params { p, values };
    conditional_sse(y, params.intercept(), params.ar(), params.ma())
}

/// Normal-equation pieces `JᵀJ` and `Jᵀe` at `values`, plus the SSE.
fn gauss_newton_system(y: &[f64], p: usize, values: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let params = Params { p, values };
    let (c, ar, ma) = (params.intercept(), params.ar(), params.ma());
    let k = values.len();
    let n = y.len();
    let mut e = vec![0.0; n];
    let mut jac = vec![0.0; n * k];
    let mut jtj = vec![0.0; k * k];
    let mut jte = vec![0.0; k];
    let mut sse = 0.0;
    let mut row = vec![0.0; k];
    for t in p..n {
        let mut r = y[t] - c;
        for (i, phi) in ar.iter().enumerate() {
            r -= phi * y[t - 1 - i];
        }
        row[0] = -1.0;
        for i in 0..p {
            row[1 + i] = -y[t - 1 - i];
        }
        for (j, theta) in ma.iter().enumerate() {
            let lag = j + 1;
            let prev = if t >= p + lag { e[t - lag] } else { 0.0 };
            r -= theta * prev;
            row[1 + p + j] = -prev;
        }
        for (j, theta) in ma.iter().enumerate() {
            let lag = j + 1;
            if t >= p + lag {
                let prev_row = &jac[(t - lag) * k..(t - lag + 1) * k];
                for (dst, &src) in row.iter_mut().zip(prev_row) {
                    *dst -= theta * src;
                }
            }
        }
        e[t] = r;
        sse += r * r;
        for a in 0..k {
            jte[a] += row[a] * r;
            for b in 0..=a {
                jtj[a * k + b] += row[a] * row[b];
            }
        }
        jac[t * k..(t + 1) * k].copy_from_slice(&row);
    }
    for a in 0..k {
        for b in 0..a {
            jtj[b * k + a] = jtj[a * k + b];
        }
    }
    (jtj, jte, sse)
}

fn ar_least_squares(y: &[f64], p: usize) -> Result<Vec<f64>> {
    let n = y.len();
    if p == 0 {
        let mean = y.iter().sum::<f64>() / n as f64;
        return Ok(vec![mean]);
    }
    let k = p + 1;
    let mut design = Vec::with_capacity((n - p) * k);
    for t in p..n {
        design.push(1.0);
        design.extend((1..=p).map(|i| y[t - i]));
    }
    linalg::least_squares(&design, &y[p..], k).ok_or(Error::Singular("AR least squares"))
}

/// Levenberg-Marquardt refinement of `(c, φ, θ)`. Returns the converged flag.
fn refine(y: &[f64], p: usize, values: &mut [f64], options: &FitOptions) -> bool {
    let k = values.len();
    let mut lambda = 1e-3;
    let mut candidate = vec![0.0; k];
    let (mut jtj, mut jte, mut sse) = gauss_newton_system(y, p, values);
    for _ in 0..options.max_iterations {
        let accepted = loop {
            let mut system = jtj.clone();
            for a in 0..k {
                let diag = jtj[a * k + a].max(1e-12);
                system[a * k + a] += lambda * diag;
            }
            let rhs: Vec<f64> = jte.iter().map(|g| -g).collect();
            if let Some(step) = linalg::cholesky_solve(&system, &rhs, k) {
                for ((dst, v), s) in candidate.iter_mut().zip(values.iter()).zip(&step) {
                    *dst = v + s;
                }
                let trial = sse_at(y, p, &candidate);
                if trial.is_finite() && trial < sse {
                    break Some(trial);
                }
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break None;
            }
        };
        let Some(trial) = accepted else {
            // no descent direction left: a stationary point of the CSS surface
            return true;
        };
        let improvement = (sse - trial) / sse;
        values.copy_from_slice(&candidate);
        lambda = (lambda / 10.0).max(1e-12);
        (jtj, jte, sse) = gauss_newton_system(y, p, values);
        if improvement < options.tolerance {
            return true;
        }
    }
    false
}

pub fn fit_arima(series: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    fit_arima_with(series, order, &FitOptions::default())
}

pub fn fit_arima_with(series: &[f64], order: ArimaOrder, options: &FitOptions) -> Result<ArimaModel> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let ArimaOrder { p, d, q } = order;
    let y = difference(series, d)?;
    let k = order.param_count();
    if y.len() < 10 * k {
        return Err(Error::invalid(format!(
            "ARIMA{order} needs at least {} observations after differencing, got {}",
            10 * k,
            y.len()
        )));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64;
    if var <= 1e-24 * mean.abs().max(1.0).powi(2) {
        return Err(Error::ConstantSeries);
    }

    let mut values = ar_least_squares(&y, p)?;
    values.resize(k, 0.0);
    let converged = if q == 0 {
        true
    } else {
        refine(&y, p, &mut values, options)
    };

    let sse = sse_at(&y, p, &values);
    let n_obs = y.len() - p;
    let (aic, bic) = information_criteria(sse, n_obs, k)?;
    Ok(ArimaModel {
        order,
        intercept: values[0],
        ar_coeffs: values[1..1 + p].to_vec(),
        ma_coeffs: values[1 + p..].to_vec(),
        sigma2: sse / n_obs as f64,
        n_obs,
        sse,
        aic,
        bic,
        converged,
    })
}

/// Inclusive order bounds for [`auto_arima`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaGrid {
    pub max_p: usize,
    pub max_d: usize,
    pub max_q: usize,
}

impl Default for ArimaGrid {
    fn default() -> Self {
        ArimaGrid {
            max_p: 5,
            max_d: 2,
            max_q: 5,
        }
    }
}

impl ArimaGrid {
    pub fn orders(&self) -> Vec<ArimaOrder> {
        let mut out = Vec::new();
        for d in 0..=self.max_d {
            for p in 0..=self.max_p {
                for q in 0..=self.max_q {
                    out.push(ArimaOrder::new(p, d, q));
                }
            }
        }
        out
    }
}

/// Exhaustive order search. Candidates that fail to fit or do not converge
/// are skipped; ties on the criterion go to smaller `p+q`, then smaller `d`,
/// then smaller `p`.
pub fn auto_arima(series: &[f64], grid: ArimaGrid, criterion: Criterion) -> Result<ArimaModel> {
    let fits: Vec<ArimaModel> = grid
        .orders()
        .into_par_iter()
        .filter_map(|order| fit_arima(series, order).ok())
        .filter(|m| m.converged)
        .collect();
    fits.into_iter()
        .min_by(|a, b| {
            let key = |m: &ArimaModel| (m.order.p + m.order.q, m.order.d, m.order.p);
            a.criterion(criterion)
                .total_cmp(&b.criterion(criterion))
                .then_with(|| key(a).cmp(&key(b)))
        })
        .ok_or(Error::NoCandidate)
}

/// Forecasts `h` steps past the end of `recent` (raw, undifferenced values).
///
/// In-sample residuals are rebuilt by running the CSS recursion over the
/// differenced history, so longer histories give better MA conditioning.
/// Future shocks are zero; forecasts are integrated back `d` times.
pub fn arima_forecast(model: &ArimaModel, recent: &[f64], h: usize) -> Result<Vec<f64>> {
    if h == 0 {
        return Err(Error::invalid("forecast horizon must be at least 1"));
    }
    if recent.len() < model.min_history() {
        return Err(Error::invalid(format!(
            "ARIMA{} forecast needs {} recent values, got {}",
            model.order,
            model.min_history(),
            recent.len()
        )));
    }
    if recent.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("forecast history contains non-finite values"));
    }
    let ArimaOrder { p, d, q } = model.order;
    let mut levels = vec![recent.to_vec()];
    for _ in 0..d {
        let next = levels
            .last()
            .expect("non-empty")
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect();
        levels.push(next);
    }
    let mut y = levels[d].clone();
    let mut e = vec![0.0; y.len().min(p)];
    e.extend(css_residuals(&y, model.intercept, &model.ar_coeffs, &model.ma_coeffs));

    let n = y.len();
    for s in 0..h {
        let t = n + s;
        let mut next = model.intercept;
        for (i, phi) in model.ar_coeffs.iter().enumerate() {
            next += phi * y[t - 1 - i];
        }
        for (j, theta) in model.ma_coeffs.iter().enumerate().take(q) {
            if t > j {
                next += theta * e[t - 1 - j];
            }
        }
        y.push(next);
        e.push(0.0);
    }

    let mut path = y.split_off(n);
    for level in levels[..d].iter().rev() {
        let mut acc = *level.last().expect("level retains at least one value");
        for v in path.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }
    Ok(path)
}
