//! Potential `V(x) = −x′Ax/2` for constant symmetric couplings, whose
//! negative gradient is the consensus vector field.

use alloc::vec::Vec;

use super::LyapunovError;
use crate::matrix::Matrix;

const SYMMETRY_TOL: f64 = 1e-12;

pub fn potential(a: &Matrix, x: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    -0.5 * x.iter().zip(&ax).map(|(u, v)| u * v).sum::<f64>()
}

/// Analytic `∇V(x) = −Ax` (valid for symmetric `A`).
pub fn potential_gradient(a: &Matrix, x: &[f64]) -> Vec<f64> {
    a.mul_vec(x).into_iter().map(|v| -v).collect()
}

/// Central differences with `h = 1e-6·(1 + ‖x‖∞)`.
pub fn potential_gradient_fd(a: &Matrix, x: &[f64]) -> Vec<f64> {
    let h = 1e-6 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut y = x.to_vec();
    (0..x.len())
        .map(|k| {
            y[k] = x[k] + h;
            let up = potential(a, &y);
            y[k] = x[k] - h;
            let down = potential(a, &y);
            y[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖Ax − (−∇V(x))‖∞` for symmetric `A`.
pub fn gradient_flow_residual(a: &Matrix, x: &[f64]) -> Result<f64, LyapunovError> {
    if x.len() != a.dim() {
        return Err(LyapunovError::DimensionMismatch { expected: a.dim(), found: x.len() });
    }
    let asym = Matrix::from_fn(a.dim(), |k, l| a[(k, l)] - a[(l, k)]).norm_inf();
    if asym > SYMMETRY_TOL {
        return Err(LyapunovError::NotSymmetric(asym));
    }
    let ax = a.mul_vec(x);
    let grad = potential_gradient(a, x);
    Ok(ax.iter().zip(&grad).map(|(f, g)| (f + g).abs()).fold(0.0, f64::max))
}
