//! Scenario execution and verdict collection.

use consensus_core::certify::{
    contraction_certificate_with, estimate_decay_rate, verify_lemma_on_trajectory, CertificateOptions, CertifyError,
};
use consensus_core::digraph::{window_connectivity_report, DigraphError, NodeSet};
use consensus_core::dynamics::{
    delayed_functional_series, simulate_delayed, simulate_ode, spread_series, DelayHistory, DelayPlacement,
    DynamicsError, StepControl, Trajectory,
};
use consensus_core::lyapunov::{
    audit_monotonicity, audit_series, check_proposition_equivalences, spread, weighted_invariance_check,
    Direction, Functional, LyapunovError, MonotonicityReport,
};
use consensus_core::metzler::MetzlerError;
use consensus_core::spectral::{spectral_graph_equivalence, SpectralError};
use consensus_core::{CouplingMatrix, CouplingSchedule, Generator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{AnalysisSpec, ConfigError, Distribution, InitialState, Placement, ScenarioConfig};
use crate::topology::{generate_topology, TopologyError};

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const VERDICT_FAILED: i32 = 2;
    pub const HYPOTHESIS_UNVERIFIED: i32 = 3;
    pub const CONFIG_ERROR: i32 = 4;
    pub const NUMERICAL_FAILURE: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Topology(_) => exit::CONFIG_ERROR,
            RunError::Numerical(_) => exit::NUMERICAL_FAILURE,
        }
    }
}

impl From<DynamicsError> for RunError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::StepTooLarge { .. }
            | DynamicsError::InvalidStep(_)
            | DynamicsError::InvalidDelay(_)
            | DynamicsError::InvalidInterval(..)
            | DynamicsError::HistoryGap { .. }
            | DynamicsError::DimensionMismatch { .. } => RunError::Config(ConfigError::invalid("integrator", e.to_string())),
            DynamicsError::Schedule(m) => m.into(),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<MetzlerError> for RunError {
    fn from(e: MetzlerError) -> Self {
        match e {
            MetzlerError::QuadratureFailure(_) | MetzlerError::NonFinite => RunError::Numerical(e.to_string()),
            other => RunError::Config(ConfigError::invalid("topology", other.to_string())),
        }
    }
}

impl From<DigraphError> for RunError {
    fn from(e: DigraphError) -> Self {
        match e {
            DigraphError::Schedule(m) => m.into(),
            other => RunError::Config(ConfigError::invalid("analysis", other.to_string())),
        }
    }
}

impl From<LyapunovError> for RunError {
    fn from(e: LyapunovError) -> Self {
        match e {
            LyapunovError::Dynamics(d) => d.into(),
            LyapunovError::NormTooLarge(_) | LyapunovError::NonFinite => RunError::Numerical(e.to_string()),
            other => RunError::Config(ConfigError::invalid("analysis", other.to_string())),
        }
    }
}

impl From<SpectralError> for RunError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Digraph(d) => d.into(),
            SpectralError::TooLarge(_) => RunError::Config(ConfigError::invalid("n", e.to_string())),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    HypothesisUnverified,
    /// Informational; carries no verdict.
    Info,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    fn exit_code(self) -> i32 {
        match self {
            Status::Pass | Status::Info => exit::PASS,
            Status::Fail => exit::VERDICT_FAILED,
            Status::HypothesisUnverified => exit::HYPOTHESIS_UNVERIFIED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub kind: &'static str,
    pub status: Status,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub n: usize,
    pub horizon: [f64; 2],
    pub delay: Option<f64>,
    pub placement: Option<&'static str>,
    pub method: &'static str,
    pub step: f64,
    pub samples: usize,
    pub initial_spread: f64,
    pub final_spread: f64,
    pub final_state: Vec<f64>,
    pub exit_code: i32,
    pub analyses: Vec<AnalysisReport>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub stride: usize,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        self.summary.exit_code
    }
}

/// Static analyses without a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub scenario: String,
    pub n: usize,
    pub exit_code: i32,
    pub analyses: Vec<AnalysisReport>,
}

fn worst(reports: &[AnalysisReport]) -> i32 {
    reports.iter().map(|r| r.status.exit_code()).max().unwrap_or(exit::PASS)
}

pub fn initial_state(cfg: &ScenarioConfig) -> Vec<f64> {
    match &cfg.x0 {
        InitialState::Values(v) => v.clone(),
        InitialState::Random(r) => match r.distribution {
            Distribution::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(r.seed.unwrap_or_default());
                (0..cfg.n).map(|_| if r.high > r.low { rng.random_range(r.low..r.high) } else { r.low }).collect()
            }
            Distribution::Linspace => {
                let d = if cfg.n > 1 { (r.high - r.low) / (cfg.n - 1) as f64 } else { 0.0 };
                (0..cfg.n).map(|k| r.low + d * k as f64).collect()
            }
        },
    }
}

pub fn build_schedule(cfg: &ScenarioConfig) -> Result<CouplingSchedule, RunError> {
    Ok(generate_topology(&cfg.topology, cfg.n, (cfg.horizon[0], cfg.horizon[1]))?)
}

fn scenario_name(cfg: &ScenarioConfig) -> String {
    cfg.name.clone().unwrap_or_else(|| "scenario".into())
}

pub fn simulate(cfg: &ScenarioConfig, schedule: &CouplingSchedule, x0: &[f64]) -> Result<Trajectory, RunError> {
    let step = StepControl { step: cfg.integrator.step, enforce_budget: cfg.integrator.enforce_budget };
    let [t0, t1] = cfg.horizon;
    Ok(match &cfg.delay {
        None => simulate_ode(schedule, x0, t0, t1, &step)?,
        Some(d) => {
            let history = DelayHistory::constant(x0, t0, d.tau)?;
            let placement = match d.placement {
                Placement::OffDiagonal => DelayPlacement::OffDiagonal,
                Placement::Full => DelayPlacement::Full,
            };
            simulate_delayed(schedule, &history, t0, t1, &step, placement)?
        }
    })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let name = scenario_name(cfg);
    let schedule = build_schedule(cfg)?;
    let x0 = initial_state(cfg);
    log::info!("{name}: simulating {} nodes over [{}, {}]", cfg.n, cfg.horizon[0], cfg.horizon[1]);
    let traj = simulate(cfg, &schedule, &x0)?;
    if traj.states().iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(RunError::Numerical("trajectory left the finite range".into()));
    }
    log::debug!("{name}: {} samples, step {}", traj.len(), traj.meta().step);

    let mut analyses = Vec::with_capacity(cfg.analysis.len());
    for spec in &cfg.analysis {
        let rep = analyse(cfg, &schedule, &x0, Some(&traj), spec)?;
        log::info!("{name}: {} -> {:?}", rep.kind, rep.status);
        analyses.push(rep);
    }
    let initial_spread = spread(traj.initial_state()).unwrap_or(0.0);
    let final_spread = spread(traj.final_state()).unwrap_or(0.0);
    let meta = traj.meta();
    let summary = RunSummary {
        scenario: name,
        n: cfg.n,
        horizon: cfg.horizon,
        delay: meta.delay,
        placement: meta.placement.map(|p| match p {
            DelayPlacement::OffDiagonal => "off_diagonal",
            DelayPlacement::Full => "full",
        }),
        method: if meta.delay.is_some() { "rk4_method_of_steps" } else { "rk4" },
        step: meta.step,
        samples: traj.len(),
        initial_spread,
        final_spread,
        final_state: traj.final_state().to_vec(),
        exit_code: worst(&analyses),
        analyses,
    };
    Ok(RunResult { summary, trajectory: traj, stride: cfg.output.stride })
}

/// Connectivity and spectral analyses only.
pub fn check_scenario(cfg: &ScenarioConfig) -> Result<CheckResult, RunError> {
    cfg.validate()?;
    let schedule = build_schedule(cfg)?;
    let x0 = initial_state(cfg);
    let mut analyses = Vec::new();
    for spec in cfg.analysis.iter().filter(|a| a.is_static()) {
        analyses.push(analyse(cfg, &schedule, &x0, None, spec)?);
    }
    Ok(CheckResult { scenario: scenario_name(cfg), n: cfg.n, exit_code: worst(&analyses), analyses })
}

fn one_based(set: &NodeSet) -> Vec<usize> {
    set.iter().map(|k| k + 1).collect()
}

fn audit_json(r: &MonotonicityReport) -> Value {
    json!({
        "functional": r.functional,
        "direction": match r.direction { Direction::NonIncreasing => "non_increasing", Direction::NonDecreasing => "non_decreasing" },
        "samples": r.samples.len(),
        "initial_value": r.samples.first().map(|s| s.1),
        "final_value": r.samples.last().map(|s| s.1),
        "max_increase": r.max_increase,
        "slack": r.slack,
    })
}

/// Distinct constant matrices of a piecewise-constant schedule, in order.
fn constant_matrices(schedule: &CouplingSchedule, kind: &str) -> Result<Vec<CouplingMatrix>, RunError> {
    let mut out: Vec<CouplingMatrix> = Vec::new();
    for seg in schedule.segments() {
        match &seg.generator {
            Generator::Constant(a) => {
                if !out.contains(a) {
                    out.push(a.clone());
                }
            }
            _ => {
                return Err(ConfigError::invalid("analysis.kind", format!("`{kind}` needs piecewise-constant coupling"))
                    .into())
            }
        }
    }
    Ok(out)
}

fn need(traj: Option<&Trajectory>) -> &Trajectory {
    traj.expect("trajectory analyses run after simulation")
}

fn analyse(
    cfg: &ScenarioConfig,
    schedule: &CouplingSchedule,
    x0: &[f64],
    traj: Option<&Trajectory>,
    spec: &AnalysisSpec,
) -> Result<AnalysisReport, RunError> {
    let kind = spec.kind();
    let report = |status, details| Ok(AnalysisReport { kind, status, details });
    match spec {
        AnalysisSpec::Connectivity { delta, window, sample_step } => {
            let rep = window_connectivity_report(schedule, *delta, *window, (cfg.horizon[0], cfg.horizon[1]), *sample_step)?;
            let without_root: Vec<f64> = rep.samples.iter().filter(|s| s.roots.is_empty()).map(|s| s.start).collect();
            let status = if rep.has_common_root() { Status::Pass } else { Status::HypothesisUnverified };
            report(
                status,
                json!({
                    "delta": rep.delta,
                    "window": rep.window,
                    "sample_step": rep.sample_step,
                    "windows": rep.samples.len(),
                    "common_roots": one_based(&rep.common_roots),
                    "windows_without_root": without_root.len(),
                    "first_window_without_root": without_root.first(),
                }),
            )
        }
        AnalysisSpec::Audit { functional, weights } => {
            let traj = need(traj);
            let rep = if functional == "delayed_spread" {
                let tau = cfg.delay.map(|d| d.tau).unwrap_or_default();
                audit_series(functional.clone(), Direction::NonIncreasing, delayed_functional_series(traj, tau)?)
            } else if functional == "potential" {
                let a = match schedule.segments() {
                    [seg] if seg.generator.is_constant() => seg.coupling_at(seg.start).into_owned(),
                    _ => {
                        return Err(ConfigError::invalid("analysis.functional", "potential needs a constant coupling").into())
                    }
                };
                audit_monotonicity(traj, &Functional::Potential(a))?
            } else {
                let f = match (Functional::from_name(functional, cfg.n)?, weights) {
                    (Functional::Weighted { f, .. }, Some(w)) => Functional::Weighted { weights: w.clone(), f },
                    (f, _) => f,
                };
                audit_monotonicity(traj, &f)?
            };
            report(Status::from_bool(rep.passed), audit_json(&rep))
        }
        AnalysisSpec::WeightedInvariance { weights } => match weighted_invariance_check(schedule, weights, need(traj)) {
            Ok(rep) => report(
                Status::from_bool(rep.passed()),
                json!({
                    "balance_residual": rep.balance_residual,
                    "weighted_sum_drift": rep.weighted_sum_drift,
                    "drift_tol": rep.drift_tol,
                    "audits": rep.audits.iter().map(audit_json).collect::<Vec<_>>(),
                }),
            ),
            Err(LyapunovError::BalanceViolated { t, residual }) => {
                report(Status::Fail, json!({ "balance_violated": { "t": t, "residual": residual } }))
            }
            Err(e) => Err(e.into()),
        },
        AnalysisSpec::Lemma { g, t0, t1 } => {
            let gset: NodeSet = g.iter().map(|k| k - 1).collect();
            let chk = verify_lemma_on_trajectory(need(traj), schedule, &gset, *t0, *t1).map_err(certify_error)?;
            let c = chk.coupling.numbers;
            report(
                Status::from_bool(chk.passed()),
                json!({
                    "g": one_based(&chk.coupling.g),
                    "window": [t0, t1],
                    "a_gh": c.a_gh, "a_hg": c.a_hg, "a_hh": c.a_hh,
                    "beta": chk.estimate.beta,
                    "g_interval": [chk.estimate.g_interval.lo, chk.estimate.g_interval.hi],
                    "h_interval": [chk.estimate.h_interval.lo, chk.estimate.h_interval.hi],
                    "g_margin": chk.g_margin,
                    "h_margin": chk.h_margin,
                    "slack": chk.slack,
                }),
            )
        }
        AnalysisSpec::Certificate { delta, window, root, check_hypothesis } => {
            let t0 = cfg.horizon[0];
            let length = (cfg.n.saturating_sub(1)) as f64 * window;
            if t0 + length > cfg.horizon[1] * (1.0 + 1e-12) + 1e-12 {
                return Err(ConfigError::invalid("analysis.window", "(n − 1)·window exceeds the horizon").into());
            }
            let opts = CertificateOptions {
                check_hypothesis: *check_hypothesis,
                step: StepControl { step: cfg.integrator.step, enforce_budget: cfg.integrator.enforce_budget },
                ..Default::default()
            };
            match contraction_certificate_with(schedule, x0, t0, *window, *delta, root - 1, &opts) {
                Ok(cert) => {
                    let traj = need(traj);
                    let end = traj.state_at(t0 + length)?;
                    let ratio = spread(&end).unwrap_or(0.0) / cert.initial_spread;
                    let sound = ratio <= cert.rho + 1e-7;
                    report(
                        Status::from_bool(sound && cert.rho < 1.0),
                        json!({
                            "rho": cert.rho,
                            "simulated_ratio": ratio,
                            "window_length": cert.window_length,
                            "terminal_interval": [cert.terminal.lo, cert.terminal.hi],
                            "promotion_order": cert.promotion_order.iter().map(|k| k + 1).collect::<Vec<_>>(),
                            "betas": cert.stages.iter().map(|s| s.estimate.beta).collect::<Vec<_>>(),
                        }),
                    )
                }
                Err(CertifyError::HypothesisUnverified { root }) => {
                    report(Status::HypothesisUnverified, json!({ "reason": format!("node {} is not a common root", root + 1) }))
                }
                Err(e @ (CertifyError::NoTrappedComponent(_) | CertifyError::ZeroSpread)) => {
                    report(Status::Fail, json!({ "reason": e.to_string() }))
                }
                Err(e) => Err(certify_error(e)),
            }
        }
        AnalysisSpec::Spectral { gap_tol } => {
            let mut all = true;
            let mut items = Vec::new();
            for a in constant_matrices(schedule, kind)? {
                match spectral_graph_equivalence(&a, *gap_tol) {
                    Ok(rep) => {
                        all &= rep.agree;
                        items.push(json!({
                            "eigenvalues": rep.eigenvalues.iter().map(|l| [l.re, l.im]).collect::<Vec<_>>(),
                            "spectrum_verdict": rep.spectrum_verdict,
                            "root_nodes": one_based(&rep.root_nodes),
                            "agree": rep.agree,
                        }));
                    }
                    Err(SpectralError::AmbiguousSpectrum(l)) => {
                        all = false;
                        items.push(json!({ "ambiguous_eigenvalue": [l.re, l.im] }));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            report(Status::from_bool(all), json!({ "gap_tol": gap_tol, "matrices": items }))
        }
        AnalysisSpec::BalanceEquivalence { trials, seed } => {
            let mut all = true;
            let mut items = Vec::new();
            for a in constant_matrices(schedule, kind)? {
                let rep = check_proposition_equivalences(&a, *trials, seed.unwrap_or_default())?;
                all &= rep.passed();
                items.push(json!({
                    "column_sums_zero": rep.column_sums_zero,
                    "symmetric_part_nsd": rep.symmetric_part_nsd,
                    "max_symmetric_eigenvalue": rep.max_symmetric_eigenvalue,
                    "skipped": rep.skipped,
                    "stochastic": rep.stochasticity.iter().all(|s| s.passed),
                    "convex_audits_passed": rep.convex_audits.iter().filter(|a| a.passed).count(),
                    "convex_audits": rep.convex_audits.len(),
                }));
            }
            report(Status::from_bool(all), json!({ "matrices": items }))
        }
        AnalysisSpec::Consensus { tolerance } => {
            let traj = need(traj);
            let v0 = spread(traj.initial_state()).unwrap_or(0.0);
            let v1 = spread(traj.final_state()).unwrap_or(0.0);
            report(
                Status::from_bool(v1 <= tolerance * v0),
                json!({ "initial_spread": v0, "final_spread": v1, "tolerance": tolerance }),
            )
        }
        AnalysisSpec::DecayRate { min_rate } => {
            let series = spread_series(need(traj));
            match estimate_decay_rate(&series) {
                Ok(rate) => {
                    let status = match min_rate {
                        Some(m) => Status::from_bool(rate >= *m),
                        None => Status::Info,
                    };
                    report(status, json!({ "rate": rate, "min_rate": min_rate }))
                }
                Err(e) => report(Status::Fail, json!({ "reason": e.to_string() })),
            }
        }
    }
}

fn certify_error(e: CertifyError) -> RunError {
    match e {
        CertifyError::Schedule(m) => m.into(),
        CertifyError::Dynamics(d) => d.into(),
        CertifyError::Digraph(d) => d.into(),
        other => RunError::Config(ConfigError::invalid("analysis", other.to_string())),
    }
}
