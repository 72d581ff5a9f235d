//! Column-sum balance and its equivalent characterisations.
//!
//! For a Metzler zero-row-sum `A` the following are tested against each
//! other: zero column sums, `A + A′ ⪯ 0`, `exp(At)` doubly stochastic, and
//! permutation-invariant convex functionals decreasing along trajectories.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{audit_monotonicity, ConvexFn, Functional, LyapunovError, MonotonicityReport};
use crate::dynamics::{simulate_ode, StepControl};
use crate::math;
use crate::matrix::Matrix;
use crate::metzler::{CouplingMatrix, CouplingSchedule};

const JACOBI_MAX_SWEEPS: usize = 100;
const EXPM_NORM_CAP: f64 = 1e4;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Only the upper triangle is read.
pub fn symmetric_eigenvalues(s: &Matrix) -> Vec<f64> {
    let n = s.dim();
    let mut a = Matrix::from_fn(n, |k, l| if k <= l { s[(k, l)] } else { s[(l, k)] });
    let frob: f64 = a.as_slice().iter().map(|v| v * v).sum::<f64>();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).map(|(p, q)| a[(p, q)] * a[(p, q)]).sum();
        if off <= 1e-30 * frob || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = math::copysign(1.0, theta) / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|k| a[(k, k)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest eigenvalue of `A + A′`.
pub fn max_symmetric_part_eigenvalue(a: &Matrix) -> f64 {
    let s = Matrix::from_fn(a.dim(), |k, l| a[(k, l)] + a[(l, k)]);
    symmetric_eigenvalues(&s).last().copied().unwrap_or(0.0)
}

/// `A + A′` has no eigenvalue above `tol`.
pub fn symmetric_part_nsd(a: &Matrix, tol: f64) -> bool {
    max_symmetric_part_eigenvalue(a) <= tol
}

pub fn column_sums_zero(a: &Matrix, tol: f64) -> bool {
    a.col_sums().iter().all(|c| c.abs() <= tol)
}

/// `exp(At)` by scaling and squaring with a Taylor series.
pub fn matrix_exponential(a: &Matrix, t: f64) -> Result<Matrix, LyapunovError> {
    if !a.is_finite() || !t.is_finite() {
        return Err(LyapunovError::NonFinite);
    }
    let at = a.scaled(t);
    let norm = at.norm_inf();
    if norm > EXPM_NORM_CAP {
        return Err(LyapunovError::NormTooLarge(norm));
    }
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let b = at.scaled(scale);
    let n = a.dim();
    let mut result = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for j in 1..=30 {
        term = term.matmul(&b).scaled(1.0 / j as f64);
        result.add_scaled(1.0, &term);
        if term.max_abs() <= f64::EPSILON * 1e-3 * result.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropositionOptions {
    /// Tolerance for zero column sums and for the sign of `A + A′`, relative
    /// to `max(1, max |a_kl|)`.
    pub tol: f64,
    pub stochastic_tol: f64,
    pub times: Vec<f64>,
    /// Horizon of each simulated trajectory.
    pub horizon: f64,
}

impl Default for PropositionOptions {
    fn default() -> Self {
        Self { tol: 1e-10, stochastic_tol: 1e-9, times: vec![0.1, 1.0, 10.0], horizon: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticityCheck {
    pub t: f64,
    pub max_row_deviation: f64,
    pub max_col_deviation: f64,
    pub min_entry: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropositionReport {
    pub column_sums_zero: bool,
    pub symmetric_part_nsd: bool,
    pub max_symmetric_eigenvalue: f64,
    pub stochasticity: Vec<StochasticityCheck>,
    pub convex_audits: Vec<MonotonicityReport>,
    /// The balance-dependent checks were not run because column sums are
    /// nonzero.
    pub skipped: bool,
}

impl PropositionReport {
    /// Zero column sums and negative semi-definiteness agree.
    pub fn equivalence_holds(&self) -> bool {
        self.column_sums_zero == self.symmetric_part_nsd
    }

    pub fn passed(&self) -> bool {
        self.equivalence_holds()
            && self.stochasticity.iter().all(|s| s.passed)
            && self.convex_audits.iter().all(|a| a.passed)
    }
}

pub fn check_proposition_equivalences(a: &CouplingMatrix, trials: usize, seed: u64) -> Result<PropositionReport, LyapunovError> {
    check_proposition_equivalences_with(a, trials, seed, &PropositionOptions::default())
}

pub fn check_proposition_equivalences_with(
    a: &CouplingMatrix,
    trials: usize,
    seed: u64,
    opts: &PropositionOptions,
) -> Result<PropositionReport, LyapunovError> {
    let m = a.matrix();
    let n = m.dim();
    let tol = opts.tol * m.max_abs().max(1.0);
    let cols = column_sums_zero(m, tol);
    let lam = max_symmetric_part_eigenvalue(m);
    let mut report = PropositionReport {
        column_sums_zero: cols,
        symmetric_part_nsd: lam <= tol,
        max_symmetric_eigenvalue: lam,
        stochasticity: Vec::new(),
        convex_audits: Vec::new(),
        skipped: !cols,
    };
    if !cols {
        return Ok(report);
    }

    for &t in &opts.times {
        let e = matrix_exponential(m, t)?;
        let dev = |s: Vec<f64>| s.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        let max_row_deviation = dev(e.row_sums());
        let max_col_deviation = dev(e.col_sums());
        let min_entry = e.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let tol = opts.stochastic_tol;
        report.stochasticity.push(StochasticityCheck {
            t,
            max_row_deviation,
            max_col_deviation,
            min_entry,
            passed: max_row_deviation <= tol && max_col_deviation <= tol && min_entry >= -tol,
        });
    }

    let schedule = CouplingSchedule::constant(a.clone(), 0.0, opts.horizon)
        .map_err(|e| LyapunovError::Dynamics(e.into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let registry = ConvexFn::registry();
    for trial in 0..trials {
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let traj = simulate_ode(&schedule, &x0, 0.0, opts.horizon, &StepControl::default())
            .map_err(LyapunovError::Dynamics)?;
        let f = if trial % (registry.len() + 1) < registry.len() {
            registry[trial % (registry.len() + 1)].clone()
        } else {
            random_max_affine(&mut rng)
        };
        let functional = Functional::Weighted { weights: vec![1.0; n], f };
        report.convex_audits.push(audit_monotonicity(&traj, &functional)?);
    }
    Ok(report)
}

fn random_max_affine(rng: &mut ChaCha8Rng) -> ConvexFn {
    let pieces = rng.random_range(1..=4);
    ConvexFn::PiecewiseLinear((0..pieces).map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metzler::DEFAULT_ROW_TOL;

    fn cm(rows: &[[f64; 2]]) -> CouplingMatrix {
        CouplingMatrix::from_rows(rows, DEFAULT_ROW_TOL).unwrap()
    }

    #[test]
    fn nsd_and_column_examples() {
        let sym = cm(&[[-1.0, 1.0], [1.0, -1.0]]);
        let lf = cm(&[[-1.0, 1.0], [0.0, 0.0]]);
        assert!(symmetric_part_nsd(sym.matrix(), 1e-12));
        assert!(!symmetric_part_nsd(lf.matrix(), 1e-12));
        assert!(symmetric_part_nsd(&Matrix::zeros(3), 0.0));
        assert!(column_sums_zero(sym.matrix(), 1e-12));
        assert!(!column_sums_zero(lf.matrix(), 1e-12));
        let ring = CouplingMatrix::from_offdiagonal(&Matrix::from_fn(4, |k, l| if l == (k + 1) % 4 { 0.7 } else { 0.0 })).unwrap();
        assert!(column_sums_zero(ring.matrix(), 1e-12));
    }

    #[test]
    fn jacobi_two_by_two() {
        let ev = symmetric_eigenvalues(&Matrix::from_rows(&[[-2.0, 2.0], [2.0, -2.0]]).unwrap());
        assert!((ev[0] + 4.0).abs() < 1e-14 && ev[1].abs() < 1e-14);
        let ev = symmetric_eigenvalues(&Matrix::from_rows(&[[-2.0, 1.0], [1.0, 0.0]]).unwrap());
        let r = math::sqrt(2.0);
        assert!((ev[0] - (-1.0 - r)).abs() < 1e-14 && (ev[1] - (-1.0 + r)).abs() < 1e-14);
    }

    #[test]
    fn expm_examples() {
        assert_eq!(matrix_exponential(&Matrix::zeros(3), 2.0).unwrap(), Matrix::identity(3));
        let a = Matrix::from_rows(&[[-1.0, 1.0], [1.0, -1.0]]).unwrap();
        for t in [0.1, 1.0, 10.0, 25.0] {
            let e = matrix_exponential(&a, t).unwrap();
            let d = math::exp(-2.0 * t);
            let want = [(1.0 + d) / 2.0, (1.0 - d) / 2.0];
            for k in 0..2 {
                for l in 0..2 {
                    let w = want[(k != l) as usize];
                    assert!((e[(k, l)] - w).abs() <= 1e-10 * w.abs().max(1e-300) + 1e-15, "t={t}");
                }
            }
        }
        assert!(matches!(matrix_exponential(&a, 1e5), Err(LyapunovError::NormTooLarge(_))));
    }

    #[test]
    fn proposition_examples() {
        let rep = check_proposition_equivalences(&cm(&[[-1.0, 1.0], [1.0, -1.0]]), 6, 1).unwrap();
        assert!(rep.passed() && !rep.skipped && rep.stochasticity.len() == 3);
        let rep = check_proposition_equivalences(&cm(&[[-1.0, 1.0], [0.0, 0.0]]), 6, 1).unwrap();
        assert!(rep.equivalence_holds() && rep.skipped);
        assert!(!rep.column_sums_zero && !rep.symmetric_part_nsd);
        assert!(rep.stochasticity.is_empty() && rep.convex_audits.is_empty());
        assert!(check_proposition_equivalences(&CouplingMatrix::zeros(3), 4, 1).unwrap().passed());
    }
}
