//! Scenario files.
//!
//! A scenario is a TOML document. Nodes are numbered from 1 in scenario
//! files and reports. The grammar is documented in the README; every table
//! rejects unknown keys.

use std::path::Path;

use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Validation { field: field.into(), reason: reason.into() }
    }

    /// The offending field of a validation error.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    pub topology: TopologySpec,
    #[serde(default)]
    pub delay: Option<DelaySpec>,
    pub x0: InitialState,
    pub horizon: [f64; 2],
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub analysis: Vec<AnalysisSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub tau: f64,
    /// `off_diagonal` delays transmitted values only; `full` delays every term.
    #[serde(default)]
    pub placement: Placement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    OffDiagonal,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulation {
    pub depth: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StarDirection {
    /// The centre drives every leaf.
    #[default]
    Outward,
    /// Every leaf drives the centre.
    Inward,
    Both,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Constant {
        /// Full matrix rows, or off-diagonal weights when `offdiagonal = true`.
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        offdiagonal: bool,
        #[serde(default)]
        modulation: Option<Modulation>,
    },
    Piecewise {
        /// Segment boundaries relative to the scenario start; the first must
        /// be 0 and the last must reach the horizon length.
        breaks: Vec<f64>,
        matrices: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        offdiagonal: bool,
    },
    Ring {
        #[serde(default = "unit")]
        weight: f64,
        #[serde(default)]
        bidirectional: bool,
        #[serde(default)]
        modulation: Option<Modulation>,
    },
    Star {
        #[serde(default = "first_node")]
        center: usize,
        #[serde(default = "unit")]
        weight: f64,
        #[serde(default)]
        direction: StarDirection,
        #[serde(default)]
        modulation: Option<Modulation>,
    },
    Line {
        #[serde(default = "unit")]
        weight: f64,
        #[serde(default)]
        bidirectional: bool,
        #[serde(default)]
        modulation: Option<Modulation>,
    },
    AlternatingLeaderFollower {
        /// Full cycle length; each of the two matrices holds for half of it.
        period: f64,
        #[serde(default = "unit")]
        weight: f64,
    },
    RandomSwitching {
        #[serde(default)]
        seed: Option<u64>,
        period: f64,
        link_probability: f64,
        #[serde(default = "default_weight_range")]
        weight_range: [f64; 2],
    },
}

fn unit() -> f64 {
    1.0
}

fn first_node() -> usize {
    1
}

fn default_weight_range() -> [f64; 2] {
    [0.1, 1.0]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Values(Vec<f64>),
    Random(RandomState),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomState {
    pub distribution: Distribution,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "minus_one")]
    pub low: f64,
    #[serde(default = "unit")]
    pub high: f64,
}

fn minus_one() -> f64 {
    -1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Uniform,
    /// Evenly spaced from `low` to `high` in node order; ignores the seed.
    Linspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "yes")]
    pub enforce_budget: bool,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self { step: None, enforce_budget: true }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Write every `stride`-th stored sample; the final sample is always written.
    #[serde(default = "one")]
    pub stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisSpec {
    Connectivity {
        delta: f64,
        window: f64,
        #[serde(default)]
        sample_step: Option<f64>,
    },
    /// Monotonicity audit of a named functional along the trajectory.
    /// Functionals: spread, sum_of_squares, centered_sum_of_squares,
    /// max_component, min_component, weighted:<f>, potential, delayed_spread.
    Audit {
        functional: String,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    WeightedInvariance {
        weights: Vec<f64>,
    },
    Lemma {
        /// Nodes of `G`, numbered from 1.
        g: Vec<usize>,
        t0: f64,
        t1: f64,
    },
    Certificate {
        delta: f64,
        window: f64,
        root: usize,
        #[serde(default = "yes")]
        check_hypothesis: bool,
    },
    Spectral {
        #[serde(default = "default_gap_tol")]
        gap_tol: f64,
    },
    /// Column sums zero, negative semi-definite symmetric part and the
    /// convex-functional audits, checked for each constant piece.
    BalanceEquivalence {
        #[serde(default = "default_trials")]
        trials: usize,
        seed: Option<u64>,
    },
    /// Final spread at most `tolerance` times the initial spread.
    Consensus {
        tolerance: f64,
    },
    DecayRate {
        #[serde(default)]
        min_rate: Option<f64>,
    },
}

fn default_gap_tol() -> f64 {
    consensus_core::spectral::DEFAULT_GAP_TOL
}

fn default_trials() -> usize {
    16
}

impl AnalysisSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AnalysisSpec::Connectivity { .. } => "connectivity",
            AnalysisSpec::Audit { .. } => "audit",
            AnalysisSpec::WeightedInvariance { .. } => "weighted_invariance",
            AnalysisSpec::Lemma { .. } => "lemma",
            AnalysisSpec::Certificate { .. } => "certificate",
            AnalysisSpec::Spectral { .. } => "spectral",
            AnalysisSpec::BalanceEquivalence { .. } => "balance_equivalence",
            AnalysisSpec::Consensus { .. } => "consensus",
            AnalysisSpec::DecayRate { .. } => "decay_rate",
        }
    }

    /// Runs on the schedule alone, without simulating the scenario.
    pub fn is_static(&self) -> bool {
        matches!(self, AnalysisSpec::Connectivity { .. } | AnalysisSpec::Spectral { .. })
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError::Parse { line, message: e.message().to_string() }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, "must be finite"))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be positive, got {v}")))
    }
}

fn node(field: &str, k: usize, n: usize) -> Result<(), ConfigError> {
    if (1..=n).contains(&k) {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("node {k} is outside 1..={n}")))
    }
}

impl ScenarioConfig {
    pub fn span(&self) -> f64 {
        self.horizon[1] - self.horizon[0]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n;
        if n == 0 {
            return Err(ConfigError::invalid("n", "must be at least 1"));
        }
        finite("horizon", self.horizon[0])?;
        finite("horizon", self.horizon[1])?;
        if !(self.horizon[1] > self.horizon[0]) {
            return Err(ConfigError::invalid("horizon", "end must exceed start"));
        }
        self.validate_topology()?;
        if let Some(d) = &self.delay {
            positive("delay.tau", d.tau)?;
        }
        match &self.x0 {
            InitialState::Values(v) if v.len() != n => {
                return Err(ConfigError::invalid("x0", format!("expected {n} values, got {}", v.len())))
            }
            InitialState::Values(v) => v.iter().try_for_each(|&x| finite("x0", x))?,
            InitialState::Random(r) => {
                if r.distribution == Distribution::Uniform && r.seed.is_none() {
                    return Err(ConfigError::invalid("seed", "random initial states need a seed"));
                }
                finite("x0.low", r.low)?;
                finite("x0.high", r.high)?;
                if !(r.high >= r.low) {
                    return Err(ConfigError::invalid("x0.high", "must not be below x0.low"));
                }
            }
        }
        if let Some(h) = self.integrator.step {
            positive("integrator.step", h)?;
        }
        if self.output.stride == 0 {
            return Err(ConfigError::invalid("output.stride", "must be at least 1"));
        }
        for a in &self.analysis {
            self.validate_analysis(a)?;
        }
        Ok(())
    }

    fn validate_topology(&self) -> Result<(), ConfigError> {
        let n = self.n;
        let check_mod = |m: &Option<Modulation>| -> Result<(), ConfigError> {
            if let Some(m) = m {
                if !(0.0..=1.0).contains(&m.depth) {
                    return Err(ConfigError::invalid("topology.modulation.depth", "must lie in [0, 1]"));
                }
                finite("topology.modulation.omega", m.omega)?;
                finite("topology.modulation.phase", m.phase)?;
            }
            Ok(())
        };
        let check_matrix = |field: &str, m: &[Vec<f64>]| -> Result<(), ConfigError> {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(ConfigError::invalid(field, format!("expected a {n}×{n} matrix")));
            }
            Ok(())
        };
        match &self.topology {
            TopologySpec::Constant { matrix, modulation, .. } => {
                check_matrix("topology.matrix", matrix)?;
                check_mod(modulation)?;
            }
            TopologySpec::Piecewise { breaks, matrices, .. } => {
                if breaks.len() < 2 || matrices.len() + 1 != breaks.len() {
                    return Err(ConfigError::invalid("topology.breaks", "need one more break than matrices"));
                }
                if breaks[0] != 0.0 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(ConfigError::invalid("topology.breaks", "must start at 0 and increase strictly"));
                }
                if *breaks.last().unwrap() < self.span() * (1.0 - 1e-12) {
                    return Err(ConfigError::invalid("topology.breaks", "must cover the horizon"));
                }
                for m in matrices {
                    check_matrix("topology.matrices", m)?;
                }
            }
            TopologySpec::Ring { weight, modulation, .. } | TopologySpec::Line { weight, modulation, .. } => {
                positive("topology.weight", *weight)?;
                check_mod(modulation)?;
            }
            TopologySpec::Star { center, weight, modulation, .. } => {
                node("topology.center", *center, n)?;
                positive("topology.weight", *weight)?;
                check_mod(modulation)?;
            }
            TopologySpec::AlternatingLeaderFollower { period, weight } => {
                positive("topology.period", *period)?;
                positive("topology.weight", *weight)?;
            }
            TopologySpec::RandomSwitching { seed, period, link_probability, weight_range } => {
                if seed.is_none() {
                    return Err(ConfigError::invalid("seed", "random_switching needs a seed"));
                }
                positive("topology.period", *period)?;
                if !(0.0..=1.0).contains(link_probability) {
                    return Err(ConfigError::invalid("topology.link_probability", "must lie in [0, 1]"));
                }
                let [lo, hi] = *weight_range;
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(ConfigError::invalid("topology.weight_range", "need 0 < low ≤ high"));
                }
            }
        }
        Ok(())
    }

    fn validate_analysis(&self, a: &AnalysisSpec) -> Result<(), ConfigError> {
        let n = self.n;
        let delayed = self.delay.is_some();
        let undelayed_only = |kind: &str| {
            if delayed {
                Err(ConfigError::invalid("analysis.kind", format!("`{kind}` applies to undelayed scenarios only")))
            } else {
                Ok(())
            }
        };
        match a {
            AnalysisSpec::Connectivity { delta, window, sample_step } => {
                positive("analysis.delta", *delta)?;
                positive("analysis.window", *window)?;
                if let Some(s) = sample_step {
                    positive("analysis.sample_step", *s)?;
                }
                if *window > self.span() {
                    return Err(ConfigError::invalid("analysis.window", "exceeds the horizon"));
                }
            }
            AnalysisSpec::Audit { functional, weights } => {
                let ok = matches!(
                    functional.as_str(),
                    "spread" | "sum_of_squares" | "centered_sum_of_squares" | "max_component" | "min_component" | "potential"
                ) || functional.starts_with("weighted:")
                    || (functional == "delayed_spread" && delayed);
                if !ok {
                    return Err(ConfigError::invalid("analysis.functional", format!("unknown functional `{functional}`")));
                }
                if let Some(w) = weights {
                    if w.len() != n || w.iter().any(|x| !(*x >= 0.0)) {
                        return Err(ConfigError::invalid("analysis.weights", format!("need {n} non-negative weights")));
                    }
                }
            }
            AnalysisSpec::WeightedInvariance { weights } => {
                undelayed_only("weighted_invariance")?;
                if weights.len() != n || weights.iter().any(|x| !(*x >= 0.0)) {
                    return Err(ConfigError::invalid("analysis.weights", format!("need {n} non-negative weights")));
                }
            }
            AnalysisSpec::Lemma { g, t0, t1 } => {
                undelayed_only("lemma")?;
                if g.is_empty() || g.len() >= n {
                    return Err(ConfigError::invalid("analysis.g", "must be a nonempty proper subset of the nodes"));
                }
                g.iter().try_for_each(|&k| node("analysis.g", k, n))?;
                if !(t1 > t0) || *t0 < self.horizon[0] || *t1 > self.horizon[1] {
                    return Err(ConfigError::invalid("analysis.t1", "window must lie inside the horizon"));
                }
            }
            AnalysisSpec::Certificate { delta, window, root, .. } => {
                undelayed_only("certificate")?;
                positive("analysis.delta", *delta)?;
                positive("analysis.window", *window)?;
                node("analysis.root", *root, n)?;
            }
            AnalysisSpec::Spectral { gap_tol } => positive("analysis.gap_tol", *gap_tol)?,
            AnalysisSpec::BalanceEquivalence { seed, .. } => {
                if seed.is_none() {
                    return Err(ConfigError::invalid("seed", "balance_equivalence draws random states and needs a seed"));
                }
            }
            AnalysisSpec::Consensus { tolerance } => positive("analysis.tolerance", *tolerance)?,
            AnalysisSpec::DecayRate { min_rate } => {
                if let Some(r) = min_rate {
                    finite("analysis.min_rate", *r)?;
                }
            }
        }
        Ok(())
    }
}
