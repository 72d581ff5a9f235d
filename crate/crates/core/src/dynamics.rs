//! Integrators for `ẋ = A(t)x` and for the delayed system
//! `ẋ(t) = diag(A(t))x(t) + (A(t) − diag(A(t)))x(t − τ)`.
//!
//! Both use classical fixed-step RK4 with the step grid aligned to every
//! schedule breakpoint, so no step straddles a switch. The delayed system is
//! advanced by the method of steps: windows of length τ, with delayed values
//! read from a piecewise cubic Hermite interpolant of what has already been
//! computed (or of the initial history).

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::lyapunov::spread;
use crate::math;
use crate::matrix::Matrix;
use crate::metzler::{CouplingSchedule, MetzlerError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Schedule(#[from] MetzlerError),
    #[error("state has {found} components, schedule has {expected} nodes")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("integration interval [{0}, {1}] is empty or not finite")]
    InvalidInterval(f64, f64),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("step {step} exceeds the stability budget {budget}")]
    StepTooLarge { step: f64, budget: f64 },
    #[error("delay must be positive and finite, got {0}")]
    InvalidDelay(f64),
    #[error("history covers [{have_start}, {have_end}] but [{need_start}, {need_end}] is required")]
    HistoryGap { need_start: f64, need_end: f64, have_start: f64, have_end: f64 },
    #[error("history samples are malformed: {0}")]
    MalformedHistory(&'static str),
    #[error("time {0} is not covered by the trajectory")]
    OutOfRange(f64),
    #[error("no sample of the trajectory has a full delay window behind it")]
    WindowNotCovered,
}

/// How the step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Nominal step; `None` selects [`default_step`].
    pub step: Option<f64>,
    /// Reject steps above `2 / (n·M)`.
    pub enforce_budget: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { step: None, enforce_budget: true }
    }
}

impl StepControl {
    pub fn fixed(step: f64) -> Self {
        Self { step: Some(step), enforce_budget: true }
    }

    pub fn unchecked(step: f64) -> Self {
        Self { step: Some(step), enforce_budget: false }
    }

    fn resolve(&self, n: usize, bound: f64, tau: Option<f64>, span: f64) -> Result<f64, DynamicsError> {
        let h = self.step.unwrap_or_else(|| default_step(n, bound, tau, span));
        if !(h > 0.0 && h.is_finite()) {
            return Err(DynamicsError::InvalidStep(h));
        }
        if self.enforce_budget && bound > 0.0 {
            let budget = 2.0 / (n as f64 * bound);
            if h > budget {
                return Err(DynamicsError::StepTooLarge { step: h, budget });
            }
        }
        Ok(h)
    }
}

/// `min(τ/20, 1/(10·n·M))`, falling back to `span/100` when neither term
/// applies (no delay and a zero schedule).
pub fn default_step(n: usize, bound: f64, tau: Option<f64>, span: f64) -> f64 {
    let mut h = f64::INFINITY;
    if let Some(tau) = tau {
        h = h.min(tau / 20.0);
    }
    if bound > 0.0 {
        h = h.min(1.0 / (10.0 * n as f64 * bound));
    }
    if h.is_finite() {
        h
    } else {
        span / 100.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
    Rk4MethodOfSteps,
}

/// Where the delay acts in the delayed system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DelayPlacement {
    /// Only transmitted values are delayed: `a_kl (x_l(t−τ) − x_k(t))`.
    #[default]
    OffDiagonal,
    /// Every term is delayed: `ẋ(t) = A(t) x(t−τ)`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorMeta {
    pub method: Method,
    /// Nominal step; actual steps are this or shorter to land on breakpoints.
    pub step: f64,
    pub delay: Option<f64>,
    pub placement: Option<DelayPlacement>,
}

/// Piecewise cubic Hermite curve. `slopes[i]` holds the derivative at the
/// left and right end of interval `i`, taken from inside the interval.
#[derive(Debug, Clone, PartialEq)]
struct DenseCurve {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    slopes: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy)]
struct Cubic {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Cubic {
    fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, h: f64) -> Self {
        let (hm0, hm1) = (h * m0, h * m1);
        Self {
            a: 2.0 * y0 + hm0 - 2.0 * y1 + hm1,
            b: -3.0 * y0 - 2.0 * hm0 + 3.0 * y1 - hm1,
            c: hm0,
            d: y0,
        }
    }

    #[inline]
    fn eval(&self, s: f64) -> f64 {
        ((self.a * s + self.b) * s + self.c) * s + self.d
    }

    /// (min, max) over `s ∈ [lo, hi]`.
    fn extrema(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (mut mn, mut mx) = {
            let (u, v) = (self.eval(lo), self.eval(hi));
            (u.min(v), u.max(v))
        };
        let mut probe = |s: f64| {
            if s > lo && s < hi {
                let v = self.eval(s);
                mn = mn.min(v);
                mx = mx.max(v);
            }
        };
        // critical points of 3a s² + 2b s + c
        let (qa, qb, qc) = (3.0 * self.a, 2.0 * self.b, self.c);
        let scale = qa.abs().max(qb.abs()).max(qc.abs());
        if scale == 0.0 {
            return (mn, mx);
        }
        if qa.abs() <= 1e-14 * scale {
            if qb != 0.0 {
                probe(-qc / qb);
            }
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let q = -0.5 * (qb + math::copysign(math::sqrt(disc), qb));
                if q != 0.0 {
                    probe(q / qa);
                    probe(qc / q);
                } else {
                    probe(0.0);
                }
            }
        }
        (mn, mx)
    }
}

impl DenseCurve {
    fn start(t: f64, x: Vec<f64>) -> Self {
        Self { times: vec![t], states: vec![x], slopes: Vec::new() }
    }

    fn push(&mut self, t: f64, x: Vec<f64>, left: Vec<f64>, right: Vec<f64>) {
        self.times.push(t);
        self.states.push(x);
        self.slopes.push((left, right));
    }

    fn first_time(&self) -> f64 {
        self.times[0]
    }

    fn last_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Interval containing `t`, assumed within `[first, last]`.
    fn locate(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s <= t);
        i.saturating_sub(1).min(self.slopes.len().saturating_sub(1))
    }

    fn cubic(&self, i: usize, comp: usize) -> Cubic {
        let h = self.times[i + 1] - self.times[i];
        let (m0, m1) = &self.slopes[i];
        Cubic::hermite(self.states[i][comp], self.states[i + 1][comp], m0[comp], m1[comp], h)
    }

    fn local(&self, i: usize, t: f64) -> f64 {
        let h = self.times[i + 1] - self.times[i];
        ((t - self.times[i]) / h).clamp(0.0, 1.0)
    }

    /// Value at `t ∈ [first, last]`.
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.slopes.is_empty() {
            out.copy_from_slice(&self.states[0]);
            return;
        }
        let i = self.locate(t);
        let s = self.local(i, t);
        for (comp, o) in out.iter_mut().enumerate() {
            *o = self.cubic(i, comp).eval(s);
        }
    }

    /// (min, max) over all components on the part of interval `i` from
    /// local coordinate `lo` to 1.
    fn interval_extrema(&self, i: usize, lo: f64) -> (f64, f64) {
        let n = self.states[i].len();
        (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), comp| {
            let (a, b) = self.cubic(i, comp).extrema(lo, 1.0);
            (mn.min(a), mx.max(b))
        })
    }
}

/// Time-stamped states with a Hermite dense output between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    curve: DenseCurve,
    meta: IntegratorMeta,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.curve.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.curve.states
    }

    pub fn len(&self) -> usize {
        self.curve.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curve.times.is_empty()
    }

    pub fn n(&self) -> usize {
        self.curve.states[0].len()
    }

    pub fn meta(&self) -> &IntegratorMeta {
        &self.meta
    }

    pub fn first_time(&self) -> f64 {
        self.curve.first_time()
    }

    pub fn final_time(&self) -> f64 {
        self.curve.last_time()
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.curve.states[0]
    }

    pub fn final_state(&self) -> &[f64] {
        &self.curve.states[self.curve.states.len() - 1]
    }

    /// Interpolated state at `t` (exact at stored times).
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>, DynamicsError> {
        let (a, b) = (self.first_time(), self.final_time());
        let slack = 1e-12 * a.abs().max(b.abs()).max(1.0);
        if !(t >= a - slack && t <= b + slack) {
            return Err(DynamicsError::OutOfRange(t));
        }
        let t = t.clamp(a, b);
        if let Ok(i) = self.curve.times.binary_search_by(|s| s.total_cmp(&t)) {
            return Ok(self.curve.states[i].clone());
        }
        let mut out = vec![0.0; self.n()];
        self.curve.eval_into(t, &mut out);
        Ok(out)
    }
}

/// Initial function `x(σ)` on `[t0 − τ, t0]` for the delayed system.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayHistory {
    tau: f64,
    curve: DenseCurve,
}

impl DelayHistory {
    /// `x(σ) = x0` on `[t0 − τ, t0]`.
    pub fn constant(x0: &[f64], t0: f64, tau: f64) -> Result<Self, DynamicsError> {
        check_tau(tau)?;
        let zero = vec![0.0; x0.len()];
        let mut curve = DenseCurve::start(t0 - tau, x0.to_vec());
        curve.push(t0, x0.to_vec(), zero.clone(), zero);
        Ok(Self { tau, curve })
    }

    /// Hermite history through `(times[i], states[i])` with derivatives
    /// `slopes[i]`. The samples must span at least `[end − τ, end]`.
    pub fn from_samples(
        tau: f64,
        times: Vec<f64>,
        states: Vec<Vec<f64>>,
        slopes: Vec<Vec<f64>>,
    ) -> Result<Self, DynamicsError> {
        check_tau(tau)?;
        if times.len() < 2 || states.len() != times.len() || slopes.len() != times.len() {
            return Err(DynamicsError::MalformedHistory("need at least two samples with states and slopes"));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(DynamicsError::MalformedHistory("times must be strictly increasing"));
        }
        let n = states[0].len();
        if states.iter().chain(&slopes).any(|v| v.len() != n) {
            return Err(DynamicsError::MalformedHistory("inconsistent state dimension"));
        }
        let mut curve = DenseCurve::start(times[0], states[0].clone());
        for i in 1..times.len() {
            curve.push(times[i], states[i].clone(), slopes[i - 1].clone(), slopes[i].clone());
        }
        Ok(Self { tau, curve })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n(&self) -> usize {
        self.curve.states[0].len()
    }

    /// `[first, last]` sample times.
    pub fn span(&self) -> (f64, f64) {
        (self.curve.first_time(), self.curve.last_time())
    }
}

fn check_tau(tau: f64) -> Result<(), DynamicsError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(DynamicsError::InvalidDelay(tau))
    }
}

fn check_interval(schedule: &CouplingSchedule, t0: f64, t1: f64) -> Result<(f64, f64), DynamicsError> {
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(DynamicsError::InvalidInterval(t0, t1));
    }
    Ok((schedule.clamp_to_horizon(t0)?, schedule.clamp_to_horizon(t1)?))
}

/// Splits `[a, b]` into `ceil((b − a)/h)` equal steps.
fn substeps(a: f64, b: f64, h: f64) -> impl Iterator<Item = (f64, f64)> {
    let m = (math::ceil((b - a) / h - 1e-9) as usize).max(1);
    let dt = (b - a) / m as f64;
    (0..m).map(move |j| {
        let lo = a + j as f64 * dt;
        let hi = if j + 1 == m { b } else { a + (j + 1) as f64 * dt };
        (lo, hi)
    })
}

fn axpy(x: &[f64], s: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + s * b).collect()
}

/// Integrates `ẋ = A(t)x` from `x0` at `t0` to `t1`.
pub fn simulate_ode(
    schedule: &CouplingSchedule,
    x0: &[f64],
    t0: f64,
    t1: f64,
    step: &StepControl,
) -> Result<Trajectory, DynamicsError> {
    let n = schedule.n();
    if x0.len() != n {
        return Err(DynamicsError::DimensionMismatch { expected: n, found: x0.len() });
    }
    let (t0, t1) = check_interval(schedule, t0, t1)?;
    let h = step.resolve(n, schedule.bound(), None, t1 - t0)?;
    let mut curve = DenseCurve::start(t0, x0.to_vec());
    let mut x = x0.to_vec();
    for seg in schedule.segments() {
        let a = seg.start.max(t0);
        let b = seg.end.min(t1);
        if b <= a {
            continue;
        }
        for (ta, tb) in substeps(a, b, h) {
            let dt = tb - ta;
            let tm = ta + 0.5 * dt;
            let a0 = seg.coupling_at(ta);
            let am = seg.coupling_at(tm);
            let a1 = seg.coupling_at(tb);
            let k1 = a0.mul_vec(&x);
            let k2 = am.mul_vec(&axpy(&x, 0.5 * dt, &k1));
            let k3 = am.mul_vec(&axpy(&x, 0.5 * dt, &k2));
            let k4 = a1.mul_vec(&axpy(&x, dt, &k3));
            for i in 0..n {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let right = a1.mul_vec(&x);
            curve.push(tb, x.clone(), k1, right);
        }
    }
    Ok(Trajectory {
        curve,
        meta: IntegratorMeta { method: Method::Rk4, step: h, delay: None, placement: None },
    })
}

/// Integrates the delayed system with delay on the off-diagonal terms only.
pub fn simulate_dde(
    schedule: &CouplingSchedule,
    history: &DelayHistory,
    t0: f64,
    t1: f64,
    step: &StepControl,
) -> Result<Trajectory, DynamicsError> {
    simulate_delayed(schedule, history, t0, t1, step, DelayPlacement::OffDiagonal)
}

fn delayed_rhs(a: &Matrix, x: &[f64], xd: &[f64], placement: DelayPlacement) -> Vec<f64> {
    match placement {
        DelayPlacement::Full => a.mul_vec(xd),
        DelayPlacement::OffDiagonal => (0..x.len())
            .map(|k| {
                let row = a.row(k);
                let off: f64 = row.iter().zip(xd).enumerate().filter(|&(l, _)| l != k).map(|(_, (w, v))| w * v).sum();
                row[k] * x[k] + off
            })
            .collect(),
    }
}

/// Method-of-steps integrator with a choice of delay placement.
pub fn simulate_delayed(
    schedule: &CouplingSchedule,
    history: &DelayHistory,
    t0: f64,
    t1: f64,
    step: &StepControl,
    placement: DelayPlacement,
) -> Result<Trajectory, DynamicsError> {
    let n = schedule.n();
    if history.n() != n {
        return Err(DynamicsError::DimensionMismatch { expected: n, found: history.n() });
    }
    let tau = history.tau;
    let (t0, t1) = check_interval(schedule, t0, t1)?;
    let eps = 1e-12 * tau;
    let (h0, h1) = history.span();
    if h0 > t0 - tau + eps || h1 < t0 - eps {
        return Err(DynamicsError::HistoryGap { need_start: t0 - tau, need_end: t0, have_start: h0, have_end: h1 });
    }
    let h = step.resolve(n, schedule.bound(), Some(tau), t1 - t0)?;

    let mut x = vec![0.0; n];
    history.curve.eval_into(t0.min(h1), &mut x);
    let mut curve = DenseCurve::start(t0, x.clone());

    // delayed value at `s`, from the history or from the computed solution
    let lookup = |curve: &DenseCurve, s: f64, out: &mut [f64]| {
        if s <= t0 {
            history.curve.eval_into(s.clamp(h0, t0.min(h1)), out);
        } else {
            curve.eval_into(s.min(curve.last_time()), out);
        }
    };

    // schedule breakpoints and their first delay-shifted images are grid nodes
    let mut kinks: Vec<f64> = Vec::new();
    for b in schedule.breakpoints() {
        for m in 0..4 {
            let t = b + m as f64 * tau;
            if t > t0 && t < t1 {
                kinks.push(t);
            }
        }
    }
    kinks.sort_by(f64::total_cmp);

    let mut xd = vec![0.0; n];
    let mut j = 0usize;
    loop {
        let wa = t0 + j as f64 * tau;
        if wa >= t1 - eps {
            break;
        }
        let mut wb = t0 + (j + 1) as f64 * tau;
        if wb > t1 - eps {
            wb = t1;
        }
        let mut nodes = vec![wa];
        for &k in kinks.iter().filter(|&&k| k > wa + eps && k < wb - eps) {
            if k - nodes[nodes.len() - 1] > eps {
                nodes.push(k);
            }
        }
        nodes.push(wb);
        for pair in nodes.windows(2) {
            for (ta, tb) in substeps(pair[0], pair[1], h) {
                let dt = tb - ta;
                let tm = ta + 0.5 * dt;
                let seg = &schedule.segments()[schedule.segment_index(tm)?];
                let a0 = seg.coupling_at(ta);
                let am = seg.coupling_at(tm);
                let a1 = seg.coupling_at(tb);

                lookup(&curve, ta - tau, &mut xd);
                let k1 = delayed_rhs(&a0, &x, &xd, placement);
                lookup(&curve, tm - tau, &mut xd);
                let k2 = delayed_rhs(&am, &axpy(&x, 0.5 * dt, &k1), &xd, placement);
                let k3 = delayed_rhs(&am, &axpy(&x, 0.5 * dt, &k2), &xd, placement);
                lookup(&curve, tb - tau, &mut xd);
                let k4 = delayed_rhs(&a1, &axpy(&x, dt, &k3), &xd, placement);
                for i in 0..n {
                    x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                let right = delayed_rhs(&a1, &x, &xd, placement);
                curve.push(tb, x.clone(), k1, right);
            }
        }
        j += 1;
    }
    Ok(Trajectory {
        curve,
        meta: IntegratorMeta { method: Method::Rk4MethodOfSteps, step: h, delay: Some(tau), placement: Some(placement) },
    })
}

/// `V(x) = max x − min x` at every stored time.
pub fn spread_series(trajectory: &Trajectory) -> Vec<(f64, f64)> {
    trajectory
        .times()
        .iter()
        .zip(trajectory.states())
        .map(|(&t, x)| (t, spread(x).unwrap_or(0.0)))
        .collect()
}

/// `𝒱(x_t)`: max minus min over all components and all `σ ∈ [t − τ, t]`,
/// evaluated on the Hermite dense output, at every stored time whose window
/// lies inside the trajectory.
pub fn delayed_functional_series(trajectory: &Trajectory, tau: f64) -> Result<Vec<(f64, f64)>, DynamicsError> {
    check_tau(tau)?;
    let curve = &trajectory.curve;
    let times = &curve.times;
    let first = curve.first_time();
    let eps = 1e-12 * tau;
    let full: Vec<(f64, f64)> = (0..curve.slopes.len()).map(|i| curve.interval_extrema(i, 0.0)).collect();

    let mut out = Vec::new();
    let mut dq_max: VecDeque<usize> = VecDeque::new();
    let mut dq_min: VecDeque<usize> = VecDeque::new();
    let mut next = 0usize;
    for (j, &t) in times.iter().enumerate() {
        while next < j {
            while dq_max.back().is_some_and(|&b| full[b].1 <= full[next].1) {
                dq_max.pop_back();
            }
            dq_max.push_back(next);
            while dq_min.back().is_some_and(|&b| full[b].0 >= full[next].0) {
                dq_min.pop_back();
            }
            dq_min.push_back(next);
            next += 1;
        }
        let lo = t - tau;
        if lo < first - eps || j == 0 {
            continue;
        }
        let lo = lo.max(first);
        let i0 = curve.locate(lo).min(j - 1);
        while dq_max.front().is_some_and(|&f| f <= i0) {
            dq_max.pop_front();
        }
        while dq_min.front().is_some_and(|&f| f <= i0) {
            dq_min.pop_front();
        }
        let (mut mn, mut mx) = curve.interval_extrema(i0, curve.local(i0, lo));
        if let Some(&f) = dq_max.front() {
            mx = mx.max(full[f].1);
        }
        if let Some(&f) = dq_min.front() {
            mn = mn.min(full[f].0);
        }
        out.push((t, mx - mn));
    }
    if out.is_empty() {
        return Err(DynamicsError::WindowNotCovered);
    }
    Ok(out)
}
