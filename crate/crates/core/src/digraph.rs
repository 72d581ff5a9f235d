//! δ-digraphs of coupling matrices and the root-node queries used as the
//! connectivity hypothesis of the convergence results.
//!
//! Arc convention: entry `(k, l)` strictly above δ gives an arc `l → k`
//! ("node k listens to node l"). This is the reverse of the Markov-chain
//! convention, so a root here is a node from which every other node can be
//! reached, not one reachable from all others.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::metzler::{CouplingSchedule, MetzlerError};

pub type NodeSet = BTreeSet<usize>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DigraphError {
    #[error("threshold must be a non-negative number, got {0}")]
    NegativeThreshold(f64),
    #[error("node {node} out of range for a digraph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Schedule(#[from] MetzlerError),
}

/// Unweighted directed graph on nodes `0..n` without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    /// `out[l]` lists the targets `k` of arcs `l → k`, sorted.
    out: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn empty(n: usize) -> Self {
        Self { out: vec![Vec::new(); n] }
    }

    pub fn from_arcs(n: usize, arcs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, DigraphError> {
        let mut g = Self::empty(n);
        for (from, to) in arcs {
            g.add_arc(from, to)?;
        }
        Ok(g)
    }

    /// δ-digraph of `m`: arc `l → k` iff `m[(k, l)] > delta`, `k ≠ l`.
    /// The comparison is exact.
    pub fn from_matrix(m: &Matrix, delta: f64) -> Result<Self, DigraphError> {
        if !(delta >= 0.0) {
            return Err(DigraphError::NegativeThreshold(delta));
        }
        let n = m.dim();
        let mut g = Self::empty(n);
        for l in 0..n {
            g.out[l] = (0..n).filter(|&k| k != l && m[(k, l)] > delta).collect();
        }
        Ok(g)
    }

    pub fn add_arc(&mut self, from: usize, to: usize) -> Result<(), DigraphError> {
        let n = self.n();
        for node in [from, to] {
            if node >= n {
                return Err(DigraphError::NodeOutOfRange { node, n });
            }
        }
        if from == to {
            return Err(DigraphError::SelfLoop(from));
        }
        let targets = &mut self.out[from];
        if let Err(pos) = targets.binary_search(&to) {
            targets.insert(pos, to);
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.out.len()
    }

    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.out.get(from).is_some_and(|t| t.binary_search(&to).is_ok())
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.out[node]
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out.iter().enumerate().flat_map(|(from, t)| t.iter().map(move |&to| (from, to)))
    }

    pub fn arc_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// Nodes reachable from `k` along arc orientation, `k` included.
    pub fn reachable_set(&self, k: usize) -> Result<NodeSet, DigraphError> {
        let n = self.n();
        if k >= n {
            return Err(DigraphError::NodeOutOfRange { node: k, n });
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([k]);
        seen[k] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &self.out[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        Ok((0..n).filter(|&v| seen[v]).collect())
    }

    /// Nodes from which every node is reachable. May be empty.
    pub fn root_nodes(&self) -> NodeSet {
        let n = self.n();
        (0..n)
            .filter(|&k| self.reachable_set(k).map(|r| r.len() == n).unwrap_or(false))
            .collect()
    }
}

/// Convenience form of [`Digraph::from_matrix`] for coupling and integrated
/// coupling matrices alike.
pub fn delta_digraph<M: AsRef<Matrix>>(m: &M, delta: f64) -> Result<Digraph, DigraphError> {
    Digraph::from_matrix(m.as_ref(), delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRoots {
    pub start: f64,
    pub roots: NodeSet,
}

/// Root sets of the δ-digraphs of `∫_t^{t+T} A(s) ds` at sampled window
/// starts. The hypothesis is only checked on the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityReport {
    pub delta: f64,
    pub window: f64,
    pub sample_step: f64,
    pub horizon: (f64, f64),
    pub samples: Vec<WindowRoots>,
    pub common_roots: NodeSet,
}

impl ConnectivityReport {
    /// True when some node is a root of every sampled window digraph.
    pub fn has_common_root(&self) -> bool {
        !self.common_roots.is_empty()
    }

    pub fn is_common_root(&self, k: usize) -> bool {
        self.common_roots.contains(&k)
    }
}

/// Window starts `t0, t0 + step, …` up to and including `t1 − window`.
pub(crate) fn window_starts(horizon: (f64, f64), window: f64, step: f64) -> Vec<f64> {
    let (t0, t1) = horizon;
    let last = t1 - window;
    let eps = 1e-9 * step;
    let mut starts = Vec::new();
    let mut i = 0usize;
    loop {
        let t = t0 + i as f64 * step;
        if t > last + eps {
            break;
        }
        starts.push(t.min(last));
        i += 1;
    }
    if let Some(&tail) = starts.last() {
        if last - tail > eps {
            starts.push(last);
        }
    }
    starts
}

/// Samples the connectivity hypothesis over `horizon`. `sample_step`
/// defaults to `window / 10`.
pub fn window_connectivity_report(
    schedule: &CouplingSchedule,
    delta: f64,
    window: f64,
    horizon: (f64, f64),
    sample_step: Option<f64>,
) -> Result<ConnectivityReport, DigraphError> {
    if !(delta > 0.0) {
        return Err(DigraphError::InvalidParameter("delta must be positive"));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(DigraphError::InvalidParameter("window length must be positive"));
    }
    let step = sample_step.unwrap_or(window / 10.0);
    if !(step > 0.0 && step.is_finite()) {
        return Err(DigraphError::InvalidParameter("sample step must be positive"));
    }
    if !(horizon.1 - horizon.0 >= window) {
        return Err(DigraphError::InvalidParameter("horizon is shorter than the window"));
    }
    let mut samples = Vec::new();
    let mut common: Option<NodeSet> = None;
    for start in window_starts(horizon, window, step) {
        let integral = schedule.integrate(start, window)?;
        let roots = delta_digraph(&integral, delta)?.root_nodes();
        common = Some(match common {
            None => roots.clone(),
            Some(c) => c.intersection(&roots).copied().collect(),
        });
        samples.push(WindowRoots { start, roots });
    }
    Ok(ConnectivityReport {
        delta,
        window,
        sample_step: step,
        horizon,
        samples,
        common_roots: common.unwrap_or_default(),
    })
}
