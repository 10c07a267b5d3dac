//! Central finite differences used as the fallback for derivatives that are
//! not registered as exact callbacks.

use nalgebra::{DMatrix, DVector};

/// Default step for central differences of user supplied callbacks.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Gradient of a scalar function by central differences.
pub fn gradient<F>(f: F, x: &[f64], h: f64) -> DVector<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut buf = x.to_vec();
    DVector::from_fn(x.len(), |i, _| {
        buf[i] = x[i] + h;
        let fp = f(&buf);
        buf[i] = x[i] - h;
        let fm = f(&buf);
        buf[i] = x[i];
        (fp - fm) / (2.0 * h)
    })
}

/// Jacobian `J[(row, j)] = ∂f_row/∂x^j` of a vector function.
pub fn jacobian<F>(f: F, x: &[f64], rows: usize, h: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut buf = x.to_vec();
    for j in 0..x.len() {
        buf[j] = x[j] + h;
        let fp = f(&buf);
        buf[j] = x[j] - h;
        let fm = f(&buf);
        buf[j] = x[j];
        for r in 0..rows {
            jac[(r, j)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Partial derivatives of a matrix valued function, one matrix per coordinate.
pub fn matrix_partials<F>(f: F, x: &[f64], h: f64) -> Vec<DMatrix<f64>>
where
    F: Fn(&[f64]) -> DMatrix<f64>,
{
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|j| {
            buf[j] = x[j] + h;
            let fp = f(&buf);
            buf[j] = x[j] - h;
            let fm = f(&buf);
            buf[j] = x[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central difference in time on a uniformly sampled series, interior index `k`.
pub fn central_time_derivative(prev: f64, next: f64, step: f64) -> f64 {
    (next - prev) / (2.0 * step)
}
