//! Dependability measures as reward variables, evaluated by a named backend.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::analytic::{
    interval_average_distribution, mean_time_to_failure, steady_state, transient_distribution,
    AnalyticError, Distribution, DEFAULT_TRANSIENT_TOLERANCE, STEADY_STATE_RESIDUAL,
};
use crate::generation::GeneratedSan;
use crate::san::{Expr, Guard, Marking};
use crate::simulation::{estimate_measure, SimConfig, SimError, DEFAULT_HORIZON};
use crate::statespace::{build_reachability, to_ctmc, CtmcModel, StateSpaceError, DEFAULT_STATE_LIMIT};

pub const ANALYTIC: &str = "analytic";
pub const SIMULATION: &str = "simulation";

/// Rate reward earned per unit time in a marking.
#[derive(Debug, Clone, PartialEq)]
pub enum Reward {
    /// 1 in up markings, 0 otherwise.
    UpIndicator,
    Expression(Expr),
}

impl Reward {
    pub fn eval(&self, m: &Marking, up: &Guard) -> f64 {
        match self {
            Reward::UpIndicator => f64::from(u8::from(up.holds(m))),
            Reward::Expression(e) => e.eval(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardVariable {
    pub name: String,
    pub reward: Reward,
}

impl RewardVariable {
    pub fn availability() -> Self {
        Self { name: "availability".into(), reward: Reward::UpIndicator }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureKind {
    InstantOfTime { t: f64 },
    SteadyState,
    IntervalAverage { horizon: f64 },
    Mttf,
}

impl MeasureKind {
    pub fn check(&self) -> Result<(), String> {
        let (label, v) = match self {
            MeasureKind::InstantOfTime { t } => ("t", *t),
            MeasureKind::IntervalAverage { horizon } => ("horizon", *horizon),
            _ => return Ok(()),
        };
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(format!("{label} = {v} must be finite and >= 0"))
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureKind::InstantOfTime { t } => write!(f, "instant(t={t})"),
            MeasureKind::SteadyState => f.write_str("steady_state"),
            MeasureKind::IntervalAverage { horizon } => write!(f, "interval_average(T={horizon})"),
            MeasureKind::Mttf => f.write_str("mttf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec {
    pub variable: RewardVariable,
    pub kind: MeasureKind,
}

impl MeasureSpec {
    pub fn new(variable: RewardVariable, kind: MeasureKind) -> Self {
        Self { variable, kind }
    }

    pub fn availability(kind: MeasureKind) -> Self {
        Self::new(RewardVariable::availability(), kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub spec: MeasureSpec,
    pub value: f64,
    /// Solver tolerance (analytic) or CI half-width (simulation).
    pub error_bound: f64,
    pub method: &'static str,
    pub diagnostics: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub sim: SimConfig,
    pub state_limit: usize,
    pub transient_tolerance: f64,
    /// Reject steady state under simulation instead of substituting an
    /// interval average.
    pub strict: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            state_limit: DEFAULT_STATE_LIMIT,
            transient_tolerance: DEFAULT_TRANSIENT_TOLERANCE,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MeasureError {
    #[error("unknown evaluation method `{0}`")]
    UnknownMethod(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("{0}")]
    BackendMismatch(String),
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

impl MeasureError {
    pub fn code(&self) -> &'static str {
        match self {
            MeasureError::UnknownMethod(_) => "UNKNOWN_METHOD",
            MeasureError::InvalidMeasure(_) => "INVALID_MEASURE",
            MeasureError::BackendMismatch(_) => "MEASURE_BACKEND_MISMATCH",
            MeasureError::StateSpace(e) => e.code(),
            MeasureError::Analytic(e) => e.code(),
            MeasureError::Simulation(e) => e.code(),
        }
    }
}

pub trait Evaluator: Send + Sync {
    fn name(&self) -> &'static str;

    fn evaluate(
        &self,
        generated: &GeneratedSan,
        spec: &MeasureSpec,
        settings: &EvalSettings,
    ) -> Result<EvaluationResult, MeasureError>;
}

/// Reachability graph plus CTMC solution.
pub struct AnalyticEvaluator;

impl AnalyticEvaluator {
    pub fn ctmc(generated: &GeneratedSan, state_limit: usize) -> Result<CtmcModel, MeasureError> {
        let graph = build_reachability(&generated.san, state_limit)?;
        Ok(to_ctmc(graph, |m| generated.is_up(m)))
    }
}

impl Evaluator for AnalyticEvaluator {
    fn name(&self) -> &'static str {
        ANALYTIC
    }

    fn evaluate(
        &self,
        generated: &GeneratedSan,
        spec: &MeasureSpec,
        settings: &EvalSettings,
    ) -> Result<EvaluationResult, MeasureError> {
        let tol = settings.transient_tolerance;
        let ctmc = Self::ctmc(generated, settings.state_limit)?;
        let states = ctmc.graph().states();
        let expect = |d: &Distribution| {
            d.expectation(|s| spec.variable.reward.eval(&states[s], &generated.up_predicate))
        };
        let (value, error_bound) = match spec.kind {
            MeasureKind::SteadyState => (expect(&steady_state(&ctmc)?), STEADY_STATE_RESIDUAL),
            MeasureKind::InstantOfTime { t } => (expect(&transient_distribution(&ctmc, t, tol)?), tol),
            MeasureKind::IntervalAverage { horizon } => {
                (expect(&interval_average_distribution(&ctmc, horizon, tol)?), tol)
            }
            MeasureKind::Mttf => (mean_time_to_failure(&ctmc)?, STEADY_STATE_RESIDUAL),
        };
        let mut diagnostics = BTreeMap::new();
        diagnostics.insert("states".into(), ctmc.len().to_string());
        diagnostics.insert("transitions".into(), ctmc.graph().transitions().len().to_string());
        Ok(EvaluationResult { spec: spec.clone(), value, error_bound, method: ANALYTIC, diagnostics })
    }
}

/// Replicated next-event simulation.
pub struct SimulationEvaluator;

impl Evaluator for SimulationEvaluator {
    fn name(&self) -> &'static str {
        SIMULATION
    }

    fn evaluate(
        &self,
        generated: &GeneratedSan,
        spec: &MeasureSpec,
        settings: &EvalSettings,
    ) -> Result<EvaluationResult, MeasureError> {
        let mut diagnostics = BTreeMap::new();
        let mut run_spec = spec.clone();
        if let MeasureKind::SteadyState = spec.kind {
            let horizon = settings.sim.horizon.unwrap_or(DEFAULT_HORIZON);
            if settings.strict {
                return Err(MeasureError::BackendMismatch(format!(
                    "steady state is not available from simulation; request an interval average (e.g. T = {horizon})"
                )));
            }
            run_spec.kind = MeasureKind::IntervalAverage { horizon };
            diagnostics.insert("substituted".into(), run_spec.kind.to_string());
        }
        let est = estimate_measure(&generated.san, &generated.up_predicate, &run_spec, &settings.sim)?;
        diagnostics.insert("replications".into(), est.replications.to_string());
        diagnostics.insert("seed".into(), settings.sim.seed.to_string());
        if let MeasureKind::Mttf = spec.kind {
            diagnostics.insert("horizon".into(), est.horizon.to_string());
            diagnostics.insert("censored".into(), est.censored.to_string());
        }
        Ok(EvaluationResult {
            spec: spec.clone(),
            value: est.mean,
            error_bound: est.ci_half_width,
            method: SIMULATION,
            diagnostics,
        })
    }
}

/// Evaluators selectable by name.
pub struct Registry {
    evaluators: BTreeMap<&'static str, Box<dyn Evaluator>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self { evaluators: BTreeMap::new() }
    }

    pub fn register(&mut self, evaluator: Box<dyn Evaluator>) {
        self.evaluators.insert(evaluator.name(), evaluator);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Evaluator, MeasureError> {
        self.evaluators
            .get(name)
            .map(|e| e.as_ref())
            .ok_or_else(|| MeasureError::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.evaluators.keys().copied().collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(AnalyticEvaluator));
        r.register(Box::new(SimulationEvaluator));
        r
    }
}

/// Evaluate `spec` on `generated` with the built-in evaluator named `method`.
pub fn evaluate(
    generated: &GeneratedSan,
    spec: &MeasureSpec,
    method: &str,
    settings: &EvalSettings,
) -> Result<EvaluationResult, MeasureError> {
    spec.kind.check().map_err(MeasureError::InvalidMeasure)?;
    Registry::default().get(method)?.evaluate(generated, spec, settings)
}
