//! Small dense solvers for the normal equations used by ARIMA fitting.
//!
//! Matrices are row-major `n * n` slices. Systems here never exceed a dozen
//! unknowns, so nothing is blocked or pivoted beyond what stability needs.

/// Solves `a * x = b` for symmetric positive definite `a` by Cholesky.
/// Returns `None` when `a` is not numerically positive definite.
pub(crate) fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum.is_finite() && sum > 0.0) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // forward: L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    // back: L^T x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Least squares fit of `y ~ design` through the normal equations.
/// `design` holds one row of `k` regressors per observation.
pub(crate) fn least_squares(design: &[f64], y: &[f64], k: usize) -> Option<Vec<f64>> {
    let rows = y.len();
    debug_assert_eq!(design.len(), rows * k);
    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    for (row, &target) in design.chunks_exact(k).zip(y) {
        for i in 0..k {
            xty[i] += row[i] * target;
            for j in 0..=i {
                xtx[i * k + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            xtx[j * k + i] = xtx[i * k + j];
        }
    }
    cholesky_solve(&xtx, &xty, k)
}
