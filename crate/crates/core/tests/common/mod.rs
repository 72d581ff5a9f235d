#![allow(dead_code)]

use consensus_core::{CouplingMatrix, CouplingSchedule, Matrix};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Off-diagonal weights, each zero with probability `1 − density`, else
/// uniform in `[0.1, 2]`.
pub fn random_coupling(rng: &mut ChaCha8Rng, n: usize, density: f64) -> CouplingMatrix {
    let w = Matrix::from_fn(n, |k, l| {
        if k != l && rng.random_bool(density) {
            rng.random_range(0.1..=2.0)
        } else {
            0.0
        }
    });
    CouplingMatrix::from_offdiagonal(&w).unwrap()
}

/// Random piecewise-constant schedule on `[0, horizon]` with `pieces`
/// segments of random length.
pub fn random_schedule(rng: &mut ChaCha8Rng, n: usize, pieces: usize, horizon: f64, density: f64) -> CouplingSchedule {
    let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.random_range(0.05..0.95) * horizon).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * horizon);
    let mut breaks = vec![0.0];
    breaks.extend(cuts);
    breaks.push(horizon);
    let mats = (0..breaks.len() - 1).map(|_| random_coupling(rng, n, density)).collect();
    CouplingSchedule::piecewise_constant(&breaks, mats).unwrap()
}

/// Strategy for an `n × n` off-diagonal weight pattern with entries in
/// `{0} ∪ [0.1, 2]`.
pub fn coupling_strategy(max_n: usize) -> impl Strategy<Value = CouplingMatrix> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..2.0], n * n).prop_map(move |w| {
            let mut m = Matrix::from_row_major(n, w);
            for k in 0..n {
                m[(k, k)] = 0.0;
            }
            CouplingMatrix::from_offdiagonal(&m).unwrap()
        })
    })
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
