//! Coupling matrices, coupling schedules and their window integrals.
//!
//! A [`CouplingMatrix`] is Metzler (non-negative off-diagonal entries) with
//! zero row sums, so `A·(1,…,1)′ = 0` and every consensus vector is an
//! equilibrium of `ẋ = Ax`. A [`CouplingSchedule`] is a bounded, piecewise
//! description of `t ↦ A(t)` over a finite horizon; [`IntegratedCoupling`]
//! is `∫ A(s) ds` over a window, which is again Metzler with zero row sums.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use crate::math;
use crate::matrix::{Matrix, ShapeError};

/// Default absolute row-sum tolerance.
pub const DEFAULT_ROW_TOL: f64 = 1e-12;

/// Interior samples per segment on the schedule verification grid.
pub const GRID_SAMPLES_PER_SEGMENT: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetzlerError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("negative off-diagonal entry at ({0}, {1})")]
    NegativeOffDiagonal(usize, usize),
    #[error("row {0} sums to {1}, not zero")]
    RowSumViolation(usize, f64),
    #[error("negative weight at ({0}, {1})")]
    NegativeWeight(usize, usize),
    #[error("weight matrix has nonzero diagonal entry at {0}")]
    NonzeroDiagonal(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("time {0} is outside the schedule horizon")]
    OutOfHorizon(f64),
    #[error("window length must be positive, got {0}")]
    InvalidWindow(f64),
    #[error("adaptive quadrature did not reach tolerance {0}")]
    QuadratureFailure(f64),
    #[error("schedule has no segments")]
    EmptySchedule,
    #[error("segment {0} is empty or has non-finite bounds")]
    DegenerateSegment(usize),
    #[error("segment {0} does not start where the previous one ends")]
    NonContiguous(usize),
    #[error("invalid generator parameter: {0}")]
    InvalidGenerator(&'static str),
    #[error("entry magnitude {value} at t = {t} exceeds declared bound {bound}")]
    BoundExceeded { t: f64, value: f64, bound: f64 },
}

/// `n×n` Metzler matrix with zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix(Matrix);

impl CouplingMatrix {
    /// Checks the Metzler and zero-row-sum structure and wraps the entries.
    ///
    /// The row-sum tolerance is `tol_row · max(1, max|a_kl|)`.
    pub fn validate(entries: &Matrix, tol_row: f64) -> Result<Self, MetzlerError> {
        if !entries.is_finite() {
            return Err(MetzlerError::NonFinite);
        }
        let n = entries.dim();
        for k in 0..n {
            for l in 0..n {
                if k != l && entries[(k, l)] < 0.0 {
                    return Err(MetzlerError::NegativeOffDiagonal(k, l));
                }
            }
        }
        let tol = tol_row * entries.max_abs().max(1.0);
        for (k, sum) in entries.row_sums().into_iter().enumerate() {
            if sum.abs() > tol {
                return Err(MetzlerError::RowSumViolation(k, sum));
            }
        }
        Ok(Self(entries.clone()))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], tol_row: f64) -> Result<Self, MetzlerError> {
        Self::validate(&Matrix::from_rows(rows)?, tol_row)
    }

    /// Builds the coupling whose off-diagonal entries are `weights` and whose
    /// diagonal is the negative off-diagonal row sum.
    pub fn from_offdiagonal(weights: &Matrix) -> Result<Self, MetzlerError> {
        if !weights.is_finite() {
            return Err(MetzlerError::NonFinite);
        }
        let n = weights.dim();
        let mut a = weights.clone();
        for k in 0..n {
            if weights[(k, k)] != 0.0 {
                return Err(MetzlerError::NonzeroDiagonal(k));
            }
            let mut out = 0.0;
            for l in 0..n {
                if l == k {
                    continue;
                }
                let w = weights[(k, l)];
                if w < 0.0 {
                    return Err(MetzlerError::NegativeWeight(k, l));
                }
                out += w;
            }
            a[(k, k)] = -out;
        }
        Ok(Self(a))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0.dim()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// The matrix with its diagonal set to zero.
    pub fn offdiagonal(&self) -> Matrix {
        let mut m = self.0.clone();
        for k in 0..m.dim() {
            m[(k, k)] = 0.0;
        }
        m
    }
}

impl AsRef<Matrix> for CouplingMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// `∫_t^{t+T} A(s) ds` together with its window.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedCoupling {
    matrix: Matrix,
    window: (f64, f64),
}

impl IntegratedCoupling {
    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    #[inline]
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn duration(&self) -> f64 {
        self.window.1 - self.window.0
    }

    /// Re-validates the integral as a coupling matrix with the row tolerance
    /// scaled by the window length.
    pub fn as_coupling(&self, tol_row: f64) -> Result<CouplingMatrix, MetzlerError> {
        CouplingMatrix::validate(&self.matrix, tol_row * self.duration().max(1.0))
    }
}

impl AsRef<Matrix> for IntegratedCoupling {
    fn as_ref(&self) -> &Matrix {
        &self.matrix
    }
}

/// Scalar-modulated coupling `A(t) = (1 + depth·sin(ω t + φ)) · B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinusoidal {
    base: CouplingMatrix,
    depth: f64,
    omega: f64,
    phase: f64,
}

impl Sinusoidal {
    /// `depth` must lie in `[0, 1]` so the modulation factor stays non-negative.
    pub fn new(base: CouplingMatrix, depth: f64, omega: f64, phase: f64) -> Result<Self, MetzlerError> {
        if !(0.0..=1.0).contains(&depth) {
            return Err(MetzlerError::InvalidGenerator("depth must lie in [0, 1]"));
        }
        if !omega.is_finite() || !phase.is_finite() {
            return Err(MetzlerError::InvalidGenerator("omega and phase must be finite"));
        }
        Ok(Self { base, depth, omega, phase })
    }

    pub fn base(&self) -> &CouplingMatrix {
        &self.base
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn factor(&self, t: f64) -> f64 {
        1.0 + self.depth * math::sin(self.omega * t + self.phase)
    }
}

/// How a segment produces `A(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Constant(CouplingMatrix),
    Sinusoidal(Sinusoidal),
    /// Entrywise linear interpolation from `from` at the segment start to
    /// `to` at the segment end.
    Ramp { from: CouplingMatrix, to: CouplingMatrix },
}

impl Generator {
    pub fn n(&self) -> usize {
        match self {
            Generator::Constant(a) => a.n(),
            Generator::Sinusoidal(s) => s.base.n(),
            Generator::Ramp { from, .. } => from.n(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Generator::Constant(_))
    }

    /// An upper bound on `|a_kl(t)|` valid over any segment.
    pub fn entry_bound(&self) -> f64 {
        match self {
            Generator::Constant(a) => a.matrix().max_abs(),
            Generator::Sinusoidal(s) => s.base.matrix().max_abs() * (1.0 + s.depth),
            Generator::Ramp { from, to } => from.matrix().max_abs().max(to.matrix().max_abs()),
        }
    }

    fn check(&self) -> Result<(), MetzlerError> {
        if let Generator::Ramp { from, to } = self {
            if from.n() != to.n() {
                return Err(MetzlerError::DimensionMismatch { expected: from.n(), found: to.n() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub generator: Generator,
}

impl Segment {
    pub fn new(start: f64, end: f64, generator: Generator) -> Self {
        Self { start, end, generator }
    }

    /// `A(t)` from this segment's generator; `t` is not range-checked, so the
    /// closed segment `[start, end]` can be evaluated from either side.
    pub fn coupling_at(&self, t: f64) -> Cow<'_, Matrix> {
        match &self.generator {
            Generator::Constant(a) => Cow::Borrowed(a.matrix()),
            Generator::Sinusoidal(s) => Cow::Owned(s.base.matrix().scaled(s.factor(t))),
            Generator::Ramp { from, to } => {
                let w = ((t - self.start) / (self.end - self.start)).clamp(0.0, 1.0);
                let mut m = from.matrix().scaled(1.0 - w);
                m.add_scaled(w, to.matrix());
                Cow::Owned(m)
            }
        }
    }
}

/// Settings for adaptive composite Simpson quadrature of continuous segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Absolute tolerance per segment on the max-entry error.
    pub tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_depth: 30 }
    }
}

/// Piecewise description of `t ↦ A(t)` with a declared entry bound `M`.
///
/// Segments are contiguous and the schedule is right-continuous at interior
/// breakpoints; the final segment is closed at the end of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSchedule {
    n: usize,
    segments: Vec<Segment>,
    bound: f64,
}

impl CouplingSchedule {
    /// Builds a schedule whose bound is derived from the generators.
    pub fn new(segments: Vec<Segment>) -> Result<Self, MetzlerError> {
        let bound = segments.iter().map(|s| s.generator.entry_bound()).fold(0.0, f64::max);
        Self::with_bound(segments, bound)
    }

    /// Builds a schedule with a declared bound `M`, checking structure and
    /// checking validity and `|a_kl| ≤ M` on the verification grid.
    pub fn with_bound(segments: Vec<Segment>, bound: f64) -> Result<Self, MetzlerError> {
        let first = segments.first().ok_or(MetzlerError::EmptySchedule)?;
        let n = first.generator.n();
        for (i, seg) in segments.iter().enumerate() {
            if !(seg.start.is_finite() && seg.end.is_finite() && seg.start < seg.end) {
                return Err(MetzlerError::DegenerateSegment(i));
            }
            if i > 0 && segments[i - 1].end != seg.start {
                return Err(MetzlerError::NonContiguous(i));
            }
            if seg.generator.n() != n {
                return Err(MetzlerError::DimensionMismatch { expected: n, found: seg.generator.n() });
            }
            seg.generator.check()?;
        }
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(MetzlerError::InvalidGenerator("bound must be finite and non-negative"));
        }
        let schedule = Self { n, segments, bound };
        let slack = bound * 1e-12;
        for (i, t) in schedule.verification_grid() {
            let a = schedule.segments[i].coupling_at(t);
            CouplingMatrix::validate(&a, DEFAULT_ROW_TOL)?;
            let value = a.max_abs();
            if value > bound + slack {
                return Err(MetzlerError::BoundExceeded { t, value, bound });
            }
        }
        Ok(schedule)
    }

    pub fn constant(a: CouplingMatrix, t0: f64, t1: f64) -> Result<Self, MetzlerError> {
        Self::new(alloc::vec![Segment::new(t0, t1, Generator::Constant(a))])
    }

    /// `matrices[i]` holds on `[breaks[i], breaks[i+1])`.
    pub fn piecewise_constant(breaks: &[f64], matrices: Vec<CouplingMatrix>) -> Result<Self, MetzlerError> {
        if breaks.len() != matrices.len() + 1 {
            return Err(MetzlerError::DimensionMismatch { expected: matrices.len() + 1, found: breaks.len() });
        }
        let segments = matrices
            .into_iter()
            .enumerate()
            .map(|(i, a)| Segment::new(breaks[i], breaks[i + 1], Generator::Constant(a)))
            .collect();
        Self::new(segments)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn bound(&self) -> f64 {
        self.bound
    }

    #[inline]
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn horizon(&self) -> (f64, f64) {
        (self.segments[0].start, self.segments[self.segments.len() - 1].end)
    }

    /// All segment boundaries including both ends of the horizon.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.segments.iter().map(|s| s.start).collect();
        b.push(self.horizon().1);
        b
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.segments.iter().all(|s| s.generator.is_constant())
    }

    /// Segment boundaries plus interior samples of every segment, each tagged
    /// with the segment that owns it (segment ends are evaluated from inside).
    pub fn verification_grid(&self) -> Vec<(usize, f64)> {
        let m = GRID_SAMPLES_PER_SEGMENT;
        let mut grid = Vec::with_capacity(self.segments.len() * (m + 2));
        for (i, s) in self.segments.iter().enumerate() {
            grid.push((i, s.start));
            let h = (s.end - s.start) / (m + 1) as f64;
            grid.extend((1..=m).map(|j| (i, s.start + j as f64 * h)));
            grid.push((i, s.end));
        }
        grid
    }

    fn horizon_slack(&self) -> f64 {
        let (a, b) = self.horizon();
        1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    /// Clamps `t` into the horizon if it lies within rounding slack of it.
    pub fn clamp_to_horizon(&self, t: f64) -> Result<f64, MetzlerError> {
        let (a, b) = self.horizon();
        let slack = self.horizon_slack();
        if t.is_nan() || t < a - slack || t > b + slack {
            return Err(MetzlerError::OutOfHorizon(t));
        }
        Ok(t.clamp(a, b))
    }

    /// Index of the segment in force at `t` (right-continuous at breakpoints).
    pub fn segment_index(&self, t: f64) -> Result<usize, MetzlerError> {
        let t = self.clamp_to_horizon(t)?;
        let idx = self.segments.partition_point(|s| s.start <= t);
        Ok(idx.saturating_sub(1).min(self.segments.len() - 1))
    }

    pub fn evaluate(&self, t: f64) -> Result<CouplingMatrix, MetzlerError> {
        let i = self.segment_index(t)?;
        let t = self.clamp_to_horizon(t)?;
        Ok(CouplingMatrix(self.segments[i].coupling_at(t).into_owned()))
    }

    pub fn integrate(&self, t: f64, duration: f64) -> Result<IntegratedCoupling, MetzlerError> {
        self.integrate_with(t, duration, &QuadratureOptions::default())
    }

    /// `∫_t^{t+T} A(s) ds`, exact on constant segments and by adaptive
    /// Simpson on continuous ones. The diagonal of the result is set to the
    /// negative off-diagonal row sum.
    pub fn integrate_with(
        &self,
        t: f64,
        duration: f64,
        opts: &QuadratureOptions,
    ) -> Result<IntegratedCoupling, MetzlerError> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(MetzlerError::InvalidWindow(duration));
        }
        let lo = self.clamp_to_horizon(t)?;
        let hi = self.clamp_to_horizon(t + duration)?;
        let mut acc = Matrix::zeros(self.n);
        for seg in &self.segments {
            let a = seg.start.max(lo);
            let b = seg.end.min(hi);
            if b <= a {
                continue;
            }
            match &seg.generator {
                Generator::Constant(m) => acc.add_scaled(b - a, m.matrix()),
                _ => {
                    let part = adaptive_simpson(&|s| seg.coupling_at(s).into_owned(), a, b, opts)?;
                    acc.add_scaled(1.0, &part);
                }
            }
        }
        for k in 0..self.n {
            acc[(k, k)] = 0.0;
            let out: f64 = acc.row(k).iter().sum();
            acc[(k, k)] = -out;
        }
        Ok(IntegratedCoupling { matrix: acc, window: (t, t + duration) })
    }
}

fn simpson(a: f64, b: f64, fa: &Matrix, fm: &Matrix, fb: &Matrix) -> Matrix {
    let mut s = fa.clone();
    s.add_scaled(4.0, fm);
    s.add_scaled(1.0, fb);
    s.scaled((b - a) / 6.0)
}

fn adaptive_simpson(
    f: &dyn Fn(f64) -> Matrix,
    a: f64,
    b: f64,
    opts: &QuadratureOptions,
) -> Result<Matrix, MetzlerError> {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, b, &fa, &fm, &fb);
    refine(f, a, b, &fa, &fm, &fb, whole, opts.tol, opts.max_depth)
        .ok_or(MetzlerError::QuadratureFailure(opts.tol))
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &dyn Fn(f64) -> Matrix,
    a: f64,
    b: f64,
    fa: &Matrix,
    fm: &Matrix,
    fb: &Matrix,
    whole: Matrix,
    tol: f64,
    depth: u32,
) -> Option<Matrix> {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson(a, m, fa, &flm, fm);
    let right = simpson(m, b, fm, &frm, fb);
    let mut sum = left.clone();
    sum.add_scaled(1.0, &right);
    let mut diff = sum.clone();
    diff.add_scaled(-1.0, &whole);
    let err = diff.max_abs();
    // rounding floor so refinement stops once the estimate is at machine precision
    let floor = 64.0 * f64::EPSILON * sum.max_abs();
    if err <= 15.0 * tol || err <= floor {
        sum.add_scaled(1.0 / 15.0, &diff);
        return Some(sum);
    }
    if depth == 0 {
        return None;
    }
    let mut l = refine(f, a, m, fa, &flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = refine(f, m, b, fm, &frm, fb, right, 0.5 * tol, depth - 1)?;
    l.add_scaled(1.0, &r);
    Some(l)
}
