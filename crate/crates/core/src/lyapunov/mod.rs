//! Candidate Lyapunov functions for consensus dynamics and audits of their
//! monotonicity along trajectories.
//!
//! - [`spread`] (max − min) is non-increasing for every Metzler zero-row-sum
//!   coupling, time-varying or not.
//! - [`sum_of_squares`] and every permutation-invariant convex function are
//!   non-increasing exactly when the coupling also has zero column sums; see
//!   [`balance`].
//! - `p₁f(x₁)+⋯+pₙf(xₙ)` with convex `f` is non-increasing when `p′A = 0`.
//! - The potential `−x′Ax/2` turns a constant symmetric coupling into a
//!   gradient flow; see [`gradient`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dynamics::DynamicsError;
use crate::math;
use crate::matrix::Matrix;

mod audit;
pub mod balance;
pub mod gradient;

pub use audit::{audit_monotonicity, audit_series, weighted_invariance_check, Direction, MonotonicityReport, WeightedInvarianceReport};
pub use balance::{
    check_proposition_equivalences, check_proposition_equivalences_with, column_sums_zero, matrix_exponential,
    symmetric_eigenvalues, symmetric_part_nsd, PropositionOptions, PropositionReport, StochasticityCheck,
};
pub use gradient::{gradient_flow_residual, potential, potential_gradient, potential_gradient_fd};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LyapunovError {
    #[error("vector is empty")]
    EmptyVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weight {0} is negative")]
    NegativeWeight(usize),
    #[error("unknown convex function `{0}`")]
    UnknownFunction(String),
    #[error("unknown functional `{0}`")]
    UnknownFunctional(String),
    #[error("piecewise-linear function needs at least one finite affine piece")]
    EmptyPiecewise,
    #[error("‖At‖∞ = {0} is too large for scaling and squaring")]
    NormTooLarge(f64),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (‖A − A′‖∞ = {0})")]
    NotSymmetric(f64),
    #[error("p′A(t) = 0 fails at t = {t} with residual {residual}")]
    BalanceViolated { t: f64, residual: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// `max x − min x`.
pub fn spread(x: &[f64]) -> Result<f64, LyapunovError> {
    if x.is_empty() {
        return Err(LyapunovError::EmptyVector);
    }
    let (mn, mx) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(mx - mn)
}

/// `S(x) = x₁² + ⋯ + xₙ²`.
pub fn sum_of_squares(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `S̃(x) = Σ (x_k − mean x)²`, positive definite with respect to the
/// consensus set.
pub fn centered_sum_of_squares(x: &[f64]) -> f64 {
    let Some(&x0) = x.first() else {
        return 0.0;
    };
    // offset by x₀ so that a consensus state gives exactly zero
    let mean = x0 + x.iter().map(|v| v - x0).sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Closed registry of convex scalar functions.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexFn {
    Square,
    Abs,
    Exp,
    /// `max(0, x)`
    PositivePart,
    /// `max_i (slope_i · x + intercept_i)`
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl ConvexFn {
    pub fn piecewise_linear(pieces: Vec<(f64, f64)>) -> Result<Self, LyapunovError> {
        if pieces.is_empty() || pieces.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(LyapunovError::EmptyPiecewise);
        }
        Ok(ConvexFn::PiecewiseLinear(pieces))
    }

    /// Looks up a parameterless registry entry. `piecewise_linear` resolves to
    /// the three-piece function used by [`ConvexFn::registry`].
    pub fn from_name(name: &str) -> Result<Self, LyapunovError> {
        match name {
            "square" => Ok(ConvexFn::Square),
            "abs" => Ok(ConvexFn::Abs),
            "exp" => Ok(ConvexFn::Exp),
            "positive_part" => Ok(ConvexFn::PositivePart),
            "piecewise_linear" => Ok(Self::default_piecewise()),
            other => Err(LyapunovError::UnknownFunction(other.into())),
        }
    }

    fn default_piecewise() -> Self {
        ConvexFn::PiecewiseLinear(alloc::vec![(-1.0, 0.0), (0.5, 0.0), (2.0, -1.0)])
    }

    /// One representative of every registry family.
    pub fn registry() -> Vec<ConvexFn> {
        alloc::vec![ConvexFn::Square, ConvexFn::Abs, ConvexFn::Exp, ConvexFn::PositivePart, Self::default_piecewise()]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConvexFn::Square => "square",
            ConvexFn::Abs => "abs",
            ConvexFn::Exp => "exp",
            ConvexFn::PositivePart => "positive_part",
            ConvexFn::PiecewiseLinear(_) => "piecewise_linear",
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ConvexFn::Square => x * x,
            ConvexFn::Abs => x.abs(),
            ConvexFn::Exp => math::exp(x),
            ConvexFn::PositivePart => x.max(0.0),
            ConvexFn::PiecewiseLinear(p) => p.iter().map(|(a, b)| a * x + b).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// `p₁f(x₁) + ⋯ + pₙf(xₙ)`.
pub fn weighted_convex_functional(x: &[f64], p: &[f64], f: &ConvexFn) -> Result<f64, LyapunovError> {
    check_weights(p, x.len())?;
    Ok(x.iter().zip(p).map(|(&v, &w)| w * f.eval(v)).sum())
}

pub(crate) fn check_weights(p: &[f64], n: usize) -> Result<(), LyapunovError> {
    if p.len() != n {
        return Err(LyapunovError::DimensionMismatch { expected: n, found: p.len() });
    }
    match p.iter().position(|&w| !(w >= 0.0)) {
        Some(k) => Err(LyapunovError::NegativeWeight(k)),
        None => Ok(()),
    }
}

/// A scalar function of the state that can be audited along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    Spread,
    SumOfSquares,
    CenteredSumOfSquares,
    Weighted { weights: Vec<f64>, f: ConvexFn },
    /// `−x′Ax/2` for a symmetric `A`.
    Potential(Matrix),
    MaxComponent,
    MinComponent,
}

impl Functional {
    /// Resolves `spread`, `sum_of_squares`, `centered_sum_of_squares`,
    /// `max_component`, `min_component` and `weighted:<f>` (uniform weights
    /// over `n` nodes). Potentials need a matrix and are built directly.
    pub fn from_name(name: &str, n: usize) -> Result<Self, LyapunovError> {
        Ok(match name {
            "spread" => Functional::Spread,
            "sum_of_squares" => Functional::SumOfSquares,
            "centered_sum_of_squares" => Functional::CenteredSumOfSquares,
            "max_component" => Functional::MaxComponent,
            "min_component" => Functional::MinComponent,
            other => match other.strip_prefix("weighted:") {
                Some(f) => Functional::Weighted {
                    weights: alloc::vec![1.0; n],
                    f: ConvexFn::from_name(f).map_err(|_| LyapunovError::UnknownFunctional(other.into()))?,
                },
                None => return Err(LyapunovError::UnknownFunctional(other.into())),
            },
        })
    }

    pub fn name(&self) -> String {
        match self {
            Functional::Spread => "spread".into(),
            Functional::SumOfSquares => "sum_of_squares".into(),
            Functional::CenteredSumOfSquares => "centered_sum_of_squares".into(),
            Functional::Weighted { f, .. } => format!("weighted:{}", f.name()),
            Functional::Potential(_) => "potential".into(),
            Functional::MaxComponent => "max_component".into(),
            Functional::MinComponent => "min_component".into(),
        }
    }

    /// Direction in which the functional is expected to move.
    pub fn direction(&self) -> Direction {
        match self {
            Functional::MinComponent => Direction::NonDecreasing,
            _ => Direction::NonIncreasing,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, LyapunovError> {
        if x.is_empty() {
            return Err(LyapunovError::EmptyVector);
        }
        Ok(match self {
            Functional::Spread => spread(x)?,
            Functional::SumOfSquares => sum_of_squares(x),
            Functional::CenteredSumOfSquares => centered_sum_of_squares(x),
            Functional::Weighted { weights, f } => weighted_convex_functional(x, weights, f)?,
            Functional::Potential(a) => {
                if a.dim() != x.len() {
                    return Err(LyapunovError::DimensionMismatch { expected: a.dim(), found: x.len() });
                }
                potential(a, x)
            }
            Functional::MaxComponent => x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Functional::MinComponent => x.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }
}
