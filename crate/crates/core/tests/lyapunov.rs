mod common;

use common::{coupling_strategy, random_coupling, random_schedule};
use consensus_core::dynamics::{simulate_ode, StepControl};
use consensus_core::lyapunov::gradient::{potential_gradient, potential_gradient_fd};
use consensus_core::lyapunov::{
    audit_monotonicity, centered_sum_of_squares, check_proposition_equivalences, matrix_exponential, spread,
    sum_of_squares, symmetric_eigenvalues, symmetric_part_nsd, Functional,
};
use consensus_core::metzler::DEFAULT_ROW_TOL;
use consensus_core::{CouplingMatrix, CouplingSchedule, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn symmetric_coupling(rng: &mut ChaCha8Rng, n: usize) -> CouplingMatrix {
    let mut w = Matrix::zeros(n);
    for k in 0..n {
        for l in k + 1..n {
            if rng.random_bool(0.6) {
                let v = rng.random_range(0.1..2.0);
                w[(k, l)] = v;
                w[(l, k)] = v;
            }
        }
    }
    CouplingMatrix::from_offdiagonal(&w).unwrap()
}

fn quad(a: &Matrix, x: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    2.0 * x.iter().zip(&ax).map(|(u, v)| u * v).sum::<f64>()
}

#[test]
fn jacobi_agrees_with_random_quadratic_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..60 {
        let n = 2 + case % 7;
        let a = if case % 3 == 0 { symmetric_coupling(&mut rng, n) } else { random_coupling(&mut rng, n, 0.5) };
        let m = a.matrix();
        let s = Matrix::from_fn(n, |k, l| m[(k, l)] + m[(l, k)]);
        let lam_max = *symmetric_eigenvalues(&s).last().unwrap();
        let mut best = f64::NEG_INFINITY;
        for _ in 0..1000 {
            // half the draws cluster around the consensus direction, where
            // the quadratic form of an unbalanced coupling turns positive
            let eps = if rng.random_bool(0.5) { 10f64.powf(rng.random_range(-3.0..0.0)) } else { 1e3 };
            let mut x: Vec<f64> = (0..n).map(|_| 1.0 + eps * rng.random_range(-1.0..1.0)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
            best = best.max(quad(m, &x));
        }
        let tol = 1e-10;
        assert!(best <= lam_max + 1e-12, "case {case}: Rayleigh quotient {best} above λ_max {lam_max}");
        assert_eq!(symmetric_part_nsd(m, tol), best <= tol, "case {case}: λ_max {lam_max}, sampled {best}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn jacobi_preserves_trace(a in coupling_strategy(8)) {
        let m = a.matrix();
        let s = Matrix::from_fn(m.dim(), |k, l| m[(k, l)] + m[(l, k)]);
        let ev = symmetric_eigenvalues(&s);
        let sum: f64 = ev.iter().sum();
        prop_assert!((sum - s.trace()).abs() <= 1e-10 * (1.0 + s.trace().abs()));
        let frob: f64 = s.as_slice().iter().map(|v| v * v).sum();
        let ev2: f64 = ev.iter().map(|v| v * v).sum();
        prop_assert!((frob - ev2).abs() <= 1e-10 * (1.0 + frob));
    }

    #[test]
    fn exponential_is_stochastic(a in coupling_strategy(6), t in 0.0f64..10.0) {
        let e = matrix_exponential(a.matrix(), t).unwrap();
        for r in e.row_sums() {
            prop_assert!((r - 1.0).abs() <= 1e-9);
        }
        prop_assert!(e.as_slice().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn consensus_characterisations_agree(x in proptest::collection::vec(-5.0f64..5.0, 1..8), c in -3.0f64..3.0, make_equal in any::<bool>()) {
        let x = if make_equal { vec![c; x.len()] } else { x };
        let v = spread(&x).unwrap();
        let s = centered_sum_of_squares(&x);
        prop_assert_eq!(v == 0.0, s == 0.0);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let identity = sum_of_squares(&x) - x.len() as f64 * mean * mean;
        prop_assert!((s - identity).abs() <= 1e-12 * sum_of_squares(&x).max(1.0));
    }

    #[test]
    fn spread_is_permutation_invariant(mut x in proptest::collection::vec(-5.0f64..5.0, 1..8), seed in any::<u64>()) {
        let before = spread(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..x.len()).rev() {
            x.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(spread(&x).unwrap(), before);
    }
}

#[test]
fn spread_and_extremes_are_monotone_on_random_schedules() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let n = rng.random_range(2..=6);
        let s = random_schedule(&mut rng, n, 6, 8.0, 0.4);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let traj = simulate_ode(&s, &x0, 0.0, 8.0, &StepControl::default()).unwrap();
        for f in [Functional::Spread, Functional::MaxComponent, Functional::MinComponent] {
            let rep = audit_monotonicity(&traj, &f).unwrap();
            assert!(rep.passed, "{} rose by {}", rep.functional, rep.max_increase);
        }
    }
}

#[test]
fn balanced_coupling_decreases_sum_of_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let a = symmetric_coupling(&mut rng, n);
        let s = CouplingSchedule::constant(a, 0.0, 4.0).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let traj = simulate_ode(&s, &x0, 0.0, 4.0, &StepControl::default()).unwrap();
        assert!(audit_monotonicity(&traj, &Functional::SumOfSquares).unwrap().passed);
        assert!(audit_monotonicity(&traj, &Functional::CenteredSumOfSquares).unwrap().passed);
        // with the mean conserved, S and S̃ differ by a constant
        let states = traj.states();
        for w in states.windows(2) {
            let ds = sum_of_squares(&w[1]) - sum_of_squares(&w[0]);
            let dc = centered_sum_of_squares(&w[1]) - centered_sum_of_squares(&w[0]);
            assert!((ds - dc).abs() <= 1e-8);
        }
    }
}

#[test]
fn leader_follower_switching_raises_sum_of_squares() {
    let a = CouplingMatrix::from_rows(&[[-1.0, 1.0], [0.0, 0.0]], DEFAULT_ROW_TOL).unwrap();
    let b = CouplingMatrix::from_rows(&[[0.0, 0.0], [1.0, -1.0]], DEFAULT_ROW_TOL).unwrap();
    let s = CouplingSchedule::piecewise_constant(&[0.0, 1.0, 2.0, 3.0, 4.0], vec![a.clone(), b.clone(), a, b]).unwrap();
    let traj = simulate_ode(&s, &[0.0, 5.0], 0.0, 4.0, &StepControl::default()).unwrap();
    let rep = audit_monotonicity(&traj, &Functional::SumOfSquares).unwrap();
    assert!(!rep.passed);
    let first_segment_end = rep.samples.iter().take_while(|(t, _)| *t <= 1.0).last().unwrap().1;
    assert!(first_segment_end > rep.samples[0].1);
    assert!(audit_monotonicity(&traj, &Functional::Spread).unwrap().passed);
}

#[test]
fn finite_difference_gradient_matches() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let a = symmetric_coupling(&mut rng, 4);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
        let g = potential_gradient(a.matrix(), &x);
        let fd = potential_gradient_fd(a.matrix(), &x);
        let err = g.iter().zip(&fd).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6, "error {err}");
    }
}

#[test]
fn equivalences_hold_on_random_couplings() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..40 {
        let n = rng.random_range(2..=6);
        let a = if case % 2 == 0 { symmetric_coupling(&mut rng, n) } else { random_coupling(&mut rng, n, 0.5) };
        let rep = check_proposition_equivalences(&a, 4, case as u64).unwrap();
        assert!(rep.passed(), "case {case}: {rep:?}");
    }
}
