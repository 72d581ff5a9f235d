//! Interval estimates for a partition of the nodes into an "inner" set `G`
//! and the rest `H`, and the staged contraction certificate built from them.
//!
//! Over a window `[t₀, t₁]` let all states lie in `[μ_min, μ_max]` and the
//! `G` states in `[g_min, g_max]`. With the integrated couplings
//! `a_GH`, `a_HG`, `a_HH` (mass flowing into `G` from `H`, into `H` from `G`,
//! and inside `H`), every `G` state at `t₁` stays in
//! `[μ_min + (g_min − μ_min)e^{−a_GH}, μ_max − (μ_max − g_max)e^{−a_GH}]`
//! and at least one `H` state is pulled into
//! `[μ_min + (g_min − μ_min)β, μ_max − (μ_max − g_max)β]`.
//!
//! The certificate starts from a common root, applies the estimate on
//! consecutive windows of length `T`, and each time moves one trapped `H`
//! node into `G`. After `n − 1` windows every state lies in a certified
//! interval strictly inside the initial bracket.

use alloc::vec::Vec;

use crate::digraph::{window_connectivity_report, DigraphError, NodeSet};
use crate::dynamics::{simulate_ode, DynamicsError, StepControl, Trajectory};
use crate::math;
use crate::metzler::{CouplingSchedule, IntegratedCoupling, MetzlerError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertifyError {
    #[error("invalid partition: {0}")]
    InvalidPartition(&'static str),
    #[error("bracket ordering violated: need μ_min ≤ g_min ≤ g_max ≤ μ_max")]
    OrderingViolated,
    #[error("trajectory covers [{have_start}, {have_end}] but the window is [{need_start}, {need_end}]")]
    CoverageGap { need_start: f64, need_end: f64, have_start: f64, have_end: f64 },
    #[error("no component of H is trapped at stage {0}")]
    NoTrappedComponent(usize),
    #[error("node {root} is not a common root of the windowed δ-digraphs")]
    HypothesisUnverified { root: usize },
    #[error("initial state is already a consensus state")]
    ZeroSpread,
    #[error("series is empty or does not start positive")]
    DegenerateSeries,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Schedule(#[from] MetzlerError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Digraph(#[from] DigraphError),
}

/// The three integrated coupling masses of a partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingNumbers {
    pub a_gh: f64,
    pub a_hg: f64,
    pub a_hh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionCoupling {
    pub g: NodeSet,
    pub h: NodeSet,
    pub numbers: CouplingNumbers,
    pub window: (f64, f64),
}

impl PartitionCoupling {
    /// Partition numbers read off an already integrated coupling.
    pub fn from_integral(integral: &IntegratedCoupling, g: &NodeSet) -> Result<Self, CertifyError> {
        let m = integral.matrix();
        let n = m.dim();
        let h = complement(g, n)?;
        let mut numbers = CouplingNumbers { a_gh: 0.0, a_hg: 0.0, a_hh: 0.0 };
        for k in 0..n {
            for l in 0..n {
                if k == l {
                    continue;
                }
                let w = m[(k, l)].max(0.0);
                match (g.contains(&k), g.contains(&l)) {
                    (true, false) => numbers.a_gh += w,
                    (false, true) => numbers.a_hg += w,
                    (false, false) => numbers.a_hh += w,
                    (true, true) => {}
                }
            }
        }
        Ok(Self { g: g.clone(), h, numbers, window: integral.window() })
    }

    pub fn beta(&self) -> f64 {
        beta_factor(&self.numbers, self.h.len())
    }
}

fn complement(g: &NodeSet, n: usize) -> Result<NodeSet, CertifyError> {
    if g.is_empty() {
        return Err(CertifyError::InvalidPartition("G is empty"));
    }
    if g.iter().any(|&k| k >= n) {
        return Err(CertifyError::InvalidPartition("node out of range"));
    }
    let h: NodeSet = (0..n).filter(|k| !g.contains(k)).collect();
    if h.is_empty() {
        return Err(CertifyError::InvalidPartition("H is empty"));
    }
    Ok(h)
}

/// Integrates the schedule over `[t0, t1]` and sums the partition masses.
/// `h` must be the complement of `g`.
pub fn coupling_numbers(
    schedule: &CouplingSchedule,
    g: &NodeSet,
    h: &NodeSet,
    t0: f64,
    t1: f64,
) -> Result<PartitionCoupling, CertifyError> {
    if complement(g, schedule.n())? != *h {
        return Err(CertifyError::InvalidPartition("H is not the complement of G"));
    }
    let integral = schedule.integrate(t0, t1 - t0)?;
    PartitionCoupling::from_integral(&integral, g)
}

/// `β = (e^{−a_GH} a_HG/|H|) / (1 + e^{a_HH} a_HG/|H| + e^{a_HH} a_HH)`.
pub fn beta_factor(c: &CouplingNumbers, h_size: usize) -> f64 {
    if c.a_hg <= 0.0 || h_size == 0 {
        return 0.0;
    }
    let q = c.a_hg / h_size as f64;
    let e = math::exp(c.a_hh);
    let den = 1.0 + e * q + e * c.a_hh;
    if !den.is_finite() {
        return 0.0;
    }
    math::exp(-c.a_gh) * q / den
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Signed distance to the nearer endpoint; negative outside.
    pub fn margin(&self, x: f64) -> f64 {
        (x - self.lo).min(self.hi - x)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaEstimate {
    pub g_interval: Interval,
    pub h_interval: Interval,
    pub beta: f64,
}

pub fn lemma_intervals(
    c: &CouplingNumbers,
    h_size: usize,
    g_min: f64,
    g_max: f64,
    mu_min: f64,
    mu_max: f64,
) -> Result<LemmaEstimate, CertifyError> {
    if !(mu_min <= g_min && g_min <= g_max && g_max <= mu_max) {
        return Err(CertifyError::OrderingViolated);
    }
    let eg = math::exp(-c.a_gh);
    let beta = beta_factor(c, h_size);
    let squeeze = |f: f64| Interval { lo: mu_min + (g_min - mu_min) * f, hi: mu_max - (mu_max - g_max) * f };
    Ok(LemmaEstimate { g_interval: squeeze(eg), h_interval: squeeze(beta), beta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheck {
    pub coupling: PartitionCoupling,
    pub estimate: LemmaEstimate,
    /// Smallest margin of a `G` state inside `g_interval`.
    pub g_margin: f64,
    /// Largest margin of an `H` state inside `h_interval`.
    pub h_margin: f64,
    pub slack: f64,
}

impl LemmaCheck {
    pub fn g_holds(&self) -> bool {
        self.g_margin >= -self.slack
    }

    pub fn h_holds(&self) -> bool {
        self.h_margin >= -self.slack
    }

    pub fn passed(&self) -> bool {
        self.g_holds() && self.h_holds()
    }
}

fn bracket<'a>(x: &[f64], nodes: impl Iterator<Item = &'a usize>) -> (f64, f64) {
    nodes.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| (lo.min(x[k]), hi.max(x[k])))
}

/// Checks both interval estimates on a simulated trajectory, taking all
/// brackets from the state at `t0`.
pub fn verify_lemma_on_trajectory(
    trajectory: &Trajectory,
    schedule: &CouplingSchedule,
    g: &NodeSet,
    t0: f64,
    t1: f64,
) -> Result<LemmaCheck, CertifyError> {
    let (a, b) = (trajectory.first_time(), trajectory.final_time());
    let eps = 1e-12 * a.abs().max(b.abs()).max(1.0);
    if !(t1 > t0) || t0 < a - eps || t1 > b + eps {
        return Err(CertifyError::CoverageGap { need_start: t0, need_end: t1, have_start: a, have_end: b });
    }
    let h = complement(g, schedule.n())?;
    let coupling = coupling_numbers(schedule, g, &h, t0, t1)?;
    let z0 = trajectory.state_at(t0)?;
    let z1 = trajectory.state_at(t1)?;
    let all: Vec<usize> = (0..z0.len()).collect();
    let (mu_min, mu_max) = bracket(&z0, all.iter());
    let (g_min, g_max) = bracket(&z0, g.iter());
    let estimate = lemma_intervals(&coupling.numbers, h.len(), g_min, g_max, mu_min, mu_max)?;
    let g_margin = g.iter().map(|&k| estimate.g_interval.margin(z1[k])).fold(f64::INFINITY, f64::min);
    let h_margin = h.iter().map(|&k| estimate.h_interval.margin(z1[k])).fold(f64::NEG_INFINITY, f64::max);
    Ok(LemmaCheck { coupling, estimate, g_margin, h_margin, slack: 1e-7 * (mu_max - mu_min) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateOptions {
    /// Confirm the common-root hypothesis before building stages.
    pub check_hypothesis: bool,
    /// Sample step for the hypothesis check; `None` means `T / 10`.
    pub sample_step: Option<f64>,
    pub step: StepControl,
    /// Trap tolerance relative to the initial spread.
    pub trap_slack: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self { check_hypothesis: true, sample_step: None, step: StepControl::default(), trap_slack: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateStage {
    pub window: (f64, f64),
    pub coupling: PartitionCoupling,
    /// `[g_min, g_max]` entering the stage.
    pub g_bracket: Interval,
    pub estimate: LemmaEstimate,
    pub promoted: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCertificate {
    pub root: usize,
    pub t0: f64,
    /// `(n − 1)·T`.
    pub window_length: f64,
    pub initial_spread: f64,
    pub mu: Interval,
    pub terminal: Interval,
    /// Certified terminal width over the initial spread.
    pub rho: f64,
    pub stages: Vec<CertificateStage>,
    /// Nodes in the order they joined `G`, starting with the root.
    pub promotion_order: Vec<usize>,
}

pub fn contraction_certificate(
    schedule: &CouplingSchedule,
    x0: &[f64],
    t0: f64,
    window: f64,
    delta: f64,
    root: usize,
) -> Result<ContractionCertificate, CertifyError> {
    contraction_certificate_with(schedule, x0, t0, window, delta, root, &CertificateOptions::default())
}

pub fn contraction_certificate_with(
    schedule: &CouplingSchedule,
    x0: &[f64],
    t0: f64,
    window: f64,
    delta: f64,
    root: usize,
    opts: &CertificateOptions,
) -> Result<ContractionCertificate, CertifyError> {
    let n = schedule.n();
    if x0.len() != n {
        return Err(DynamicsError::DimensionMismatch { expected: n, found: x0.len() }.into());
    }
    if root >= n {
        return Err(CertifyError::InvalidPartition("root out of range"));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(CertifyError::InvalidParameter("window length must be positive"));
    }
    let all: Vec<usize> = (0..n).collect();
    let (mu_min, mu_max) = bracket(x0, all.iter());
    let v0 = mu_max - mu_min;
    if !(v0 > 0.0) {
        return Err(CertifyError::ZeroSpread);
    }
    let total = (n - 1) as f64 * window;
    if opts.check_hypothesis {
        let rep = window_connectivity_report(schedule, delta, window, (t0, t0 + total), opts.sample_step)?;
        if !rep.is_common_root(root) {
            return Err(CertifyError::HypothesisUnverified { root });
        }
    }

    let mu = Interval { lo: mu_min, hi: mu_max };
    let slack = opts.trap_slack * v0;
    let mut g = NodeSet::new();
    g.insert(root);
    let mut g_bracket = Interval { lo: x0[root], hi: x0[root] };
    let mut x = x0.to_vec();
    let mut stages = Vec::with_capacity(n - 1);
    let mut order = alloc::vec![root];
    for s in 0..n - 1 {
        let ta = t0 + s as f64 * window;
        let tb = t0 + (s + 1) as f64 * window;
        let integral = schedule.integrate(ta, window)?;
        let coupling = PartitionCoupling::from_integral(&integral, &g)?;
        let estimate = lemma_intervals(&coupling.numbers, coupling.h.len(), g_bracket.lo, g_bracket.hi, mu_min, mu_max)?;
        if !(estimate.beta > 0.0) {
            return Err(CertifyError::NoTrappedComponent(s));
        }
        x = simulate_ode(schedule, &x, ta, tb, &opts.step)?.final_state().to_vec();
        let mut best: Option<(usize, f64)> = None;
        for &k in &coupling.h {
            let m = estimate.h_interval.margin(x[k]);
            if m >= -slack && best.is_none_or(|(_, bm)| m > bm) {
                best = Some((k, m));
            }
        }
        let Some((promoted, margin)) = best else {
            return Err(CertifyError::NoTrappedComponent(s));
        };
        g.insert(promoted);
        order.push(promoted);
        stages.push(CertificateStage { window: (ta, tb), coupling, g_bracket, estimate, promoted, margin });
        g_bracket = Interval {
            lo: estimate.g_interval.lo.min(estimate.h_interval.lo),
            hi: estimate.g_interval.hi.max(estimate.h_interval.hi),
        };
    }
    Ok(ContractionCertificate {
        root,
        t0,
        window_length: total,
        initial_spread: v0,
        mu,
        terminal: g_bracket,
        rho: g_bracket.width() / v0,
        stages,
        promotion_order: order,
    })
}

/// Least-squares slope of `log V` against time over samples with
/// `V > 1e-12·V(0)`, reported as a non-negative rate `λ` with
/// `V ≈ V(0)e^{−λt}`.
pub fn estimate_decay_rate(series: &[(f64, f64)]) -> Result<f64, CertifyError> {
    let v0 = match series.first() {
        Some(&(_, v)) if v > 0.0 && v.is_finite() => v,
        _ => return Err(CertifyError::DegenerateSeries),
    };
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, v)| t.is_finite() && *v > 1e-12 * v0 && v.is_finite())
        .map(|&(t, v)| (t, math::ln(v)))
        .collect();
    if pts.len() < 2 {
        return Err(CertifyError::DegenerateSeries);
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), &(t, y)| (a + (t - tm) * (y - ym), b + (t - tm) * (t - tm)));
    if !(sxx > 0.0) {
        return Err(CertifyError::DegenerateSeries);
    }
    Ok((-sxy / sxx).max(0.0))
}
