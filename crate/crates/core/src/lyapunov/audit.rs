use alloc::string::String;
use alloc::vec::Vec;

use super::{check_weights, ConvexFn, Functional, LyapunovError};
use crate::dynamics::Trajectory;
use crate::metzler::CouplingSchedule;

const RELATIVE_SLACK: f64 = 1e-9;
const BALANCE_TOL: f64 = 1e-9;
const DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    NonIncreasing,
    NonDecreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub functional: String,
    pub direction: Direction,
    pub samples: Vec<(f64, f64)>,
    /// Largest step against the expected direction between consecutive
    /// samples; zero or negative when the series is strictly monotone.
    pub max_increase: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Audits a precomputed series with slack `1e-9·(1 + |first value|)`.
pub fn audit_series(name: impl Into<String>, direction: Direction, samples: Vec<(f64, f64)>) -> MonotonicityReport {
    let initial = samples.first().map_or(0.0, |s| s.1);
    let slack = RELATIVE_SLACK * (1.0 + initial.abs());
    let sign = match direction {
        Direction::NonIncreasing => 1.0,
        Direction::NonDecreasing => -1.0,
    };
    let max_increase = samples
        .windows(2)
        .map(|w| sign * (w[1].1 - w[0].1))
        .fold(f64::NEG_INFINITY, f64::max);
    let max_increase = if max_increase.is_finite() { max_increase } else { 0.0 };
    let finite = samples.iter().all(|s| s.1.is_finite());
    MonotonicityReport {
        functional: name.into(),
        direction,
        samples,
        max_increase,
        slack,
        passed: finite && max_increase <= slack,
    }
}

/// Evaluates `functional` at every stored sample and audits the series.
pub fn audit_monotonicity(trajectory: &Trajectory, functional: &Functional) -> Result<MonotonicityReport, LyapunovError> {
    let samples = trajectory
        .times()
        .iter()
        .zip(trajectory.states())
        .map(|(&t, x)| functional.evaluate(x).map(|v| (t, v)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(audit_series(functional.name(), functional.direction(), samples))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedInvarianceReport {
    /// Largest `‖p′A(t)‖∞` on the verification grid.
    pub balance_residual: f64,
    pub audits: Vec<MonotonicityReport>,
    /// Largest `|p′x(t) − p′x(t₀)|`.
    pub weighted_sum_drift: f64,
    pub drift_tol: f64,
}

impl WeightedInvarianceReport {
    pub fn passed(&self) -> bool {
        self.weighted_sum_drift <= self.drift_tol && self.audits.iter().all(|a| a.passed)
    }
}

/// Checks `p′A(t) = 0` on the schedule's verification grid, then audits
/// `Σ p_k f(x_k)` for every registry `f` and the drift of `p′x`.
pub fn weighted_invariance_check(
    schedule: &CouplingSchedule,
    p: &[f64],
    trajectory: &Trajectory,
) -> Result<WeightedInvarianceReport, LyapunovError> {
    let n = schedule.n();
    check_weights(p, n)?;
    if trajectory.n() != n {
        return Err(LyapunovError::DimensionMismatch { expected: n, found: trajectory.n() });
    }
    let scale = p.iter().fold(1.0f64, |m, w| m.max(*w));
    let mut balance_residual = 0.0f64;
    for (i, t) in schedule.verification_grid() {
        let a = schedule.segments()[i].coupling_at(t);
        let tol = BALANCE_TOL * scale * a.max_abs().max(1.0);
        for l in 0..n {
            let r: f64 = (0..n).map(|k| p[k] * a[(k, l)]).sum();
            if r.abs() > tol {
                return Err(LyapunovError::BalanceViolated { t, residual: r.abs() });
            }
            balance_residual = balance_residual.max(r.abs());
        }
    }

    let audits = ConvexFn::registry()
        .into_iter()
        .map(|f| audit_monotonicity(trajectory, &Functional::Weighted { weights: p.to_vec(), f }))
        .collect::<Result<Vec<_>, _>>()?;

    let dot = |x: &[f64]| x.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
    let s0 = dot(trajectory.initial_state());
    let weighted_sum_drift = trajectory.states().iter().map(|x| (dot(x) - s0).abs()).fold(0.0, f64::max);
    Ok(WeightedInvarianceReport {
        balance_residual,
        audits,
        weighted_sum_drift,
        drift_tol: DRIFT_TOL * (1.0 + s0.abs()),
    })
}
