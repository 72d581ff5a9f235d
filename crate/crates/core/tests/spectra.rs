mod common;

use common::coupling_strategy;
use consensus_core::spectral::{eigenvalues, spectral_graph_equivalence, DEFAULT_GAP_TOL};
use consensus_core::Matrix;
use num_complex::Complex64;
use proptest::prelude::*;

/// Characteristic polynomial coefficients, leading first, by the
/// Faddeev–LeVerrier recursion.
fn char_poly(a: &Matrix) -> Vec<f64> {
    let n = a.dim();
    let mut c = vec![1.0];
    let mut m = Matrix::zeros(n);
    for k in 1..=n {
        let mut next = a.matmul(&m);
        next.add_scaled(c[k - 1], &Matrix::identity(n));
        m = next;
        c.push(-a.matmul(&m).trace() / k as f64);
    }
    c
}

/// Polynomial roots by Durand–Kerner iteration.
fn roots(c: &[f64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let eval = |z: Complex64| c.iter().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * z + k);
    let scale = 1.0 + c.iter().skip(1).fold(0.0f64, |m, v| m.max(v.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * scale).collect();
    for _ in 0..2000 {
        let prev = z.clone();
        for i in 0..n {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    den *= z[i] - z[j];
                }
            }
            let zi = z[i];
            z[i] = zi - eval(zi) / den;
        }
        if z.iter().zip(&prev).all(|(a, b)| (a - b).norm() < 1e-15 * scale) {
            break;
        }
    }
    z
}

/// Pairs every value of `a` with a distinct value of `b` within `tol`.
fn matched(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    let mut used = vec![false; b.len()];
    for x in a {
        let best = (0..b.len()).filter(|&j| !used[j]).min_by(|&i, &j| (x - b[i]).norm().total_cmp(&(x - b[j]).norm()));
        match best {
            Some(j) if (x - b[j]).norm() <= tol => used[j] = true,
            _ => return false,
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn eigenvalues_sum_to_trace(a in coupling_strategy(8)) {
        let ev = eigenvalues(a.matrix()).unwrap();
        let sum: Complex64 = ev.iter().sum();
        let tr = a.matrix().trace();
        prop_assert!((sum.re - tr).abs() <= 1e-8 * tr.abs().max(1.0));
        prop_assert!(sum.im.abs() <= 1e-8 * tr.abs().max(1.0));
    }

    #[test]
    fn eigenvalues_lie_in_gersgorin_disc(a in coupling_strategy(8)) {
        let m = a.matrix();
        let r = (0..m.dim()).map(|k| m[(k, k)].abs()).fold(0.0, f64::max);
        let slack = 1e-9 * r.max(1.0);
        for l in eigenvalues(m).unwrap() {
            prop_assert!(l.re <= slack);
            prop_assert!((l + r).norm() <= r + slack);
        }
    }

    #[test]
    fn eigenvalues_match_characteristic_roots(a in coupling_strategy(4)) {
        let ev = eigenvalues(a.matrix()).unwrap();
        let oracle = roots(&char_poly(a.matrix()));
        // repeated roots are only located to about the square root of the
        // working precision
        let tol = 1e-6 * a.matrix().max_abs().max(1.0);
        prop_assert!(matched(&ev, &oracle, tol), "{:?} vs {:?}", ev, oracle);
    }

    #[test]
    fn trivial_eigenvector_is_ones(a in coupling_strategy(8)) {
        let ones = vec![1.0; a.n()];
        let r = a.matrix().mul_vec(&ones).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(r <= 1e-12 * a.matrix().max_abs().max(1.0));
        let ev = eigenvalues(a.matrix()).unwrap();
        prop_assert!(ev.iter().any(|l| l.norm() <= 1e-9 * a.matrix().max_abs().max(1.0)));
    }

    #[test]
    fn spectrum_and_graph_agree(a in coupling_strategy(8)) {
        let rep = spectral_graph_equivalence(&a, DEFAULT_GAP_TOL).unwrap();
        prop_assert!(rep.agree, "{:?}", rep);
    }
}

#[test]
fn faddeev_leverrier_oracle_on_known_matrix() {
    let a = Matrix::from_rows(&[[-1.0, 1.0], [1.0, -1.0]]).unwrap();
    assert_eq!(char_poly(&a), vec![1.0, 2.0, 0.0]);
}
