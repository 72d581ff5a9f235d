//! Named coupling generators.

use consensus_core::metzler::{MetzlerError, Sinusoidal, DEFAULT_ROW_TOL};
use consensus_core::{CouplingMatrix, CouplingSchedule, Generator, Matrix, Segment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Modulation, StarDirection, TopologySpec};

#[derive(Debug, thiserror::Error)]
pub enum TopologyError {
    #[error("invalid topology: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Coupling(#[from] MetzlerError),
}

fn invalid(msg: impl Into<String>) -> TopologyError {
    TopologyError::InvalidSpec(msg.into())
}

fn matrix(rows: &[Vec<f64>], offdiagonal: bool) -> Result<CouplingMatrix, TopologyError> {
    let m = Matrix::from_rows(rows).map_err(MetzlerError::from)?;
    Ok(if offdiagonal { CouplingMatrix::from_offdiagonal(&m)? } else { CouplingMatrix::validate(&m, DEFAULT_ROW_TOL)? })
}

fn weights(n: usize, mut w: impl FnMut(usize, usize) -> f64) -> Result<CouplingMatrix, TopologyError> {
    Ok(CouplingMatrix::from_offdiagonal(&Matrix::from_fn(n, |k, l| if k == l { 0.0 } else { w(k, l) }))?)
}

fn single(a: CouplingMatrix, modulation: &Option<Modulation>, horizon: (f64, f64)) -> Result<CouplingSchedule, TopologyError> {
    let gen = match modulation {
        None => Generator::Constant(a),
        Some(m) => Generator::Sinusoidal(Sinusoidal::new(a, m.depth, m.omega, m.phase)?),
    };
    Ok(CouplingSchedule::new(vec![Segment::new(horizon.0, horizon.1, gen)])?)
}

/// Segment boundaries `t0, t0 + len, …` with the last one clipped to `t1`.
fn uniform_breaks(horizon: (f64, f64), len: f64) -> Vec<f64> {
    let (t0, t1) = horizon;
    let mut b = vec![t0];
    let mut j = 1u64;
    loop {
        let t = t0 + j as f64 * len;
        if t >= t1 - 1e-12 * len {
            b.push(t1);
            return b;
        }
        b.push(t);
        j += 1;
    }
}

/// Builds the schedule over `horizon`. Node numbers inside `spec` count
/// from 1.
pub fn generate_topology(spec: &TopologySpec, n: usize, horizon: (f64, f64)) -> Result<CouplingSchedule, TopologyError> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let (t0, t1) = horizon;
    match spec {
        TopologySpec::Constant { matrix: rows, offdiagonal, modulation } => {
            single(matrix(rows, *offdiagonal)?, modulation, horizon)
        }
        TopologySpec::Piecewise { breaks, matrices, offdiagonal } => {
            let mut b = vec![t0];
            let mut mats = Vec::new();
            for (w, rows) in breaks.windows(2).zip(matrices) {
                if t0 + w[0] >= t1 {
                    break;
                }
                b.push((t0 + w[1]).min(t1));
                mats.push(matrix(rows, *offdiagonal)?);
            }
            if *b.last().unwrap() < t1 {
                return Err(invalid("piecewise breaks do not cover the horizon"));
            }
            Ok(CouplingSchedule::piecewise_constant(&b, mats)?)
        }
        TopologySpec::Ring { weight, bidirectional, modulation } => {
            let a = weights(n, |k, l| {
                let fwd = l == (k + 1) % n;
                let back = *bidirectional && k == (l + 1) % n;
                if fwd || back {
                    *weight
                } else {
                    0.0
                }
            })?;
            single(a, modulation, horizon)
        }
        TopologySpec::Star { center, weight, direction, modulation } => {
            let c = center.checked_sub(1).filter(|&c| c < n).ok_or_else(|| invalid("star centre out of range"))?;
            let a = weights(n, |k, l| {
                let out = l == c && matches!(direction, StarDirection::Outward | StarDirection::Both);
                let inw = k == c && matches!(direction, StarDirection::Inward | StarDirection::Both);
                if out || inw {
                    *weight
                } else {
                    0.0
                }
            })?;
            single(a, modulation, horizon)
        }
        TopologySpec::Line { weight, bidirectional, modulation } => {
            let a = weights(n, |k, l| if l + 1 == k || (*bidirectional && k + 1 == l) { *weight } else { 0.0 })?;
            single(a, modulation, horizon)
        }
        TopologySpec::AlternatingLeaderFollower { period, weight } => {
            // first half: node k follows k + 1; second half: k + 1 follows k
            let fwd = weights(n, |k, l| if l == k + 1 { *weight } else { 0.0 })?;
            let back = weights(n, |k, l| if k == l + 1 { *weight } else { 0.0 })?;
            let b = uniform_breaks(horizon, period / 2.0);
            let mats = (0..b.len() - 1).map(|i| if i % 2 == 0 { fwd.clone() } else { back.clone() }).collect();
            Ok(CouplingSchedule::piecewise_constant(&b, mats)?)
        }
        TopologySpec::RandomSwitching { seed, period, link_probability, weight_range } => {
            let seed = seed.ok_or_else(|| invalid("random_switching needs a seed"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let [lo, hi] = *weight_range;
            let b = uniform_breaks(horizon, *period);
            let mut mats = Vec::with_capacity(b.len() - 1);
            for _ in 0..b.len() - 1 {
                mats.push(weights(n, |_, _| {
                    if rng.random_bool(*link_probability) {
                        if hi > lo {
                            rng.random_range(lo..=hi)
                        } else {
                            lo
                        }
                    } else {
                        0.0
                    }
                })?);
            }
            Ok(CouplingSchedule::piecewise_constant(&b, mats)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_leader_follower_two_nodes() {
        let s = generate_topology(&TopologySpec::AlternatingLeaderFollower { period: 1.0, weight: 1.0 }, 2, (0.0, 3.0)).unwrap();
        assert_eq!(s.segments().len(), 6);
        assert_eq!(s.evaluate(0.25).unwrap().matrix().to_rows(), vec![vec![-1.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(s.evaluate(0.75).unwrap().matrix().to_rows(), vec![vec![0.0, 0.0], vec![1.0, -1.0]]);
        assert_eq!(s.evaluate(1.25).unwrap().matrix().to_rows(), vec![vec![-1.0, 1.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn ring_three_nodes() {
        let spec = TopologySpec::Ring { weight: 1.0, bidirectional: false, modulation: None };
        let s = generate_topology(&spec, 3, (0.0, 1.0)).unwrap();
        let want = vec![vec![-1.0, 1.0, 0.0], vec![0.0, -1.0, 1.0], vec![1.0, 0.0, -1.0]];
        assert_eq!(s.evaluate(0.5).unwrap().matrix().to_rows(), want);
    }

    #[test]
    fn random_switching_zero_probability() {
        let spec = TopologySpec::RandomSwitching { seed: Some(1), period: 0.5, link_probability: 0.0, weight_range: [0.1, 1.0] };
        let s = generate_topology(&spec, 4, (0.0, 2.0)).unwrap();
        assert_eq!(s.bound(), 0.0);
        assert!(s.segments().iter().all(|seg| seg.coupling_at(seg.start).max_abs() == 0.0));
    }

    #[test]
    fn random_switching_is_reproducible() {
        let spec = TopologySpec::RandomSwitching { seed: Some(42), period: 0.3, link_probability: 0.4, weight_range: [0.1, 2.0] };
        let a = generate_topology(&spec, 5, (0.0, 4.0)).unwrap();
        let b = generate_topology(&spec, 5, (0.0, 4.0)).unwrap();
        assert_eq!(a, b);
        for seg in a.segments() {
            let m = seg.coupling_at(seg.start);
            for k in 0..5 {
                for l in 0..5 {
                    let w = m[(k, l)];
                    assert!(k == l || w == 0.0 || (0.1..=2.0).contains(&w));
                }
            }
        }
    }

    #[test]
    fn star_and_line_directions() {
        let spec = TopologySpec::Star { center: 2, weight: 0.5, direction: StarDirection::Outward, modulation: None };
        let m = generate_topology(&spec, 3, (0.0, 1.0)).unwrap().evaluate(0.0).unwrap();
        assert_eq!(m.matrix()[(0, 1)], 0.5);
        assert_eq!(m.matrix()[(1, 0)], 0.0);
        let spec = TopologySpec::Line { weight: 1.0, bidirectional: false, modulation: None };
        let m = generate_topology(&spec, 3, (0.0, 1.0)).unwrap().evaluate(0.0).unwrap();
        assert_eq!(m.matrix()[(1, 0)], 1.0);
        assert_eq!(m.matrix()[(0, 1)], 0.0);
    }
}
