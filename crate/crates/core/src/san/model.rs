use std::collections::HashSet;

use thiserror::Error;

use super::expr::{Expr, Guard, OpKind, TokenOp};
use crate::validation::{ValidationReport, ViolationCode};

/// Tolerance on the sum of an activity's case probabilities.
pub const CASE_SUM_TOLERANCE: f64 = 1e-9;

/// Default bound on instantaneous firings while stabilizing one marking.
pub const DEFAULT_STABILIZATION_BOUND: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlaceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivityId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Place {
    pub id: String,
    pub name: String,
}

/// Token counts indexed by place.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marking(Vec<u32>);

impl Marking {
    pub fn tokens(&self, place: PlaceId) -> u32 {
        self.0[place.0]
    }

    pub fn set(&mut self, place: PlaceId, tokens: u32) {
        self.0[place.0] = tokens;
    }

    pub(crate) fn slot_mut(&mut self, place: PlaceId) -> &mut u32 {
        &mut self.0[place.0]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u32>> for Marking {
    fn from(tokens: Vec<u32>) -> Self {
        Marking(tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputGate {
    pub predicate: Guard,
    /// Applied when the activity fires; may only remove tokens.
    pub function: Vec<TokenOp>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputGate {
    pub ops: Vec<TokenOp>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub probability: Expr,
    pub gate: OutputGate,
}

impl Case {
    pub fn new(probability: impl Into<Expr>, ops: Vec<TokenOp>) -> Self {
        Self {
            probability: probability.into(),
            gate: OutputGate { ops },
        }
    }

    /// Single case with probability one.
    pub fn certain(ops: Vec<TokenOp>) -> Self {
        Self::new(1.0, ops)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Timing {
    /// Exponentially distributed delay with a marking-dependent rate.
    Exponential { rate: Expr },
    /// Any other delay family. Accepted by the data model, rejected by
    /// [`validate_san`].
    General { family: String },
    /// Zero delay; competes with other enabled instantaneous activities by
    /// weight.
    Instantaneous { weight: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activity {
    pub id: String,
    pub timing: Timing,
    pub input_gates: Vec<InputGate>,
    pub cases: Vec<Case>,
}

impl Activity {
    pub fn timed(id: impl Into<String>, rate: impl Into<Expr>) -> Self {
        Self {
            id: id.into(),
            timing: Timing::Exponential { rate: rate.into() },
            input_gates: Vec::new(),
            cases: Vec::new(),
        }
    }

    pub fn instantaneous(id: impl Into<String>, weight: f64) -> Self {
        Self {
            id: id.into(),
            timing: Timing::Instantaneous { weight },
            input_gates: Vec::new(),
            cases: Vec::new(),
        }
    }

    pub fn input(mut self, predicate: impl Into<Guard>, function: Vec<TokenOp>) -> Self {
        self.input_gates.push(InputGate {
            predicate: predicate.into(),
            function,
        });
        self
    }

    pub fn case(mut self, case: Case) -> Self {
        self.cases.push(case);
        self
    }

    pub fn is_instantaneous(&self) -> bool {
        matches!(self.timing, Timing::Instantaneous { .. })
    }

    pub fn is_enabled(&self, m: &Marking) -> bool {
        self.input_gates.iter().all(|g| g.predicate.holds(m))
    }

    /// Current exponential rate, or `None` if the activity is not
    /// exponentially timed.
    pub fn rate(&self, m: &Marking) -> Option<f64> {
        match &self.timing {
            Timing::Exponential { rate } => Some(rate.eval(m)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanModel {
    pub places: Vec<Place>,
    pub activities: Vec<Activity>,
    pub initial_marking: Marking,
}

impl SanModel {
    pub fn place_id(&self, id: &str) -> Option<PlaceId> {
        self.places.iter().position(|p| p.id == id).map(PlaceId)
    }

    pub fn activity_id(&self, id: &str) -> Option<ActivityId> {
        self.activities.iter().position(|a| a.id == id).map(ActivityId)
    }

    pub fn activity(&self, id: ActivityId) -> &Activity {
        &self.activities[id.0]
    }

    pub fn place_names(&self) -> Vec<&str> {
        self.places.iter().map(|p| p.id.as_str()).collect()
    }

    /// Build a marking from `(place id, tokens)` pairs; unlisted places hold 0.
    pub fn marking(&self, tokens: &[(&str, u32)]) -> Result<Marking, SanError> {
        let mut m = Marking(vec![0; self.places.len()]);
        for (name, count) in tokens {
            let p = self
                .place_id(name)
                .ok_or_else(|| SanError::UnknownPlace((*name).to_string()))?;
            m.set(p, *count);
        }
        Ok(m)
    }

    pub(crate) fn check_marking(&self, m: &Marking) -> Result<(), SanError> {
        if m.len() != self.places.len() {
            return Err(SanError::InvalidMarking {
                expected: self.places.len(),
                found: m.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SanError {
    #[error("marking has {found} entries, model has {expected} places")]
    InvalidMarking { expected: usize, found: usize },
    #[error("unknown place `{0}`")]
    UnknownPlace(String),
    #[error("unknown activity `{0}`")]
    UnknownActivity(String),
    #[error("activity `{0}` is not enabled")]
    NotEnabled(String),
    #[error("more than {bound} instantaneous firings without reaching a stable marking")]
    Unstable { bound: usize },
    #[error("activity `{activity}` drives place `{place}` negative or past capacity")]
    TokenRange { activity: String, place: String },
    #[error("activity `{activity}` has non-positive rate {rate}")]
    NonPositiveRate { activity: String, rate: f64 },
    #[error("activity `{activity}` case probabilities sum to {sum}")]
    CaseProbabilitySum { activity: String, sum: f64 },
    #[error("activity `{0}` has no cases")]
    Caseless(String),
    #[error("activity `{activity}` uses non-exponential delay `{family}`")]
    NonExponential { activity: String, family: String },
}

impl SanError {
    pub fn code(&self) -> &'static str {
        match self {
            SanError::InvalidMarking { .. } | SanError::UnknownPlace(_) => "INVALID_MARKING",
            SanError::UnknownActivity(_) => "UNKNOWN_ACTIVITY",
            SanError::NotEnabled(_) => "NOT_ENABLED",
            SanError::Unstable { .. } => "UNSTABLE",
            SanError::TokenRange { .. } => "TOKEN_RANGE",
            SanError::NonPositiveRate { .. } => "NON_POSITIVE_RATE",
            SanError::CaseProbabilitySum { .. } => "CASE_PROB_SUM",
            SanError::Caseless(_) => "CASELESS_ACTIVITY",
            SanError::NonExponential { .. } => "NON_EXPONENTIAL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SanViolation {
    EmptyId,
    DuplicatePlaceId,
    DuplicateActivityId,
    UnknownPlace,
    InvalidInitialMarking,
    CaselessActivity,
    CaseProbSum,
    NonPositiveRate,
    NonPositiveWeight,
    NonExponential,
    InputGateIncreases,
}

impl ViolationCode for SanViolation {
    fn code(&self) -> &'static str {
        match self {
            Self::EmptyId => "EMPTY_ID",
            Self::DuplicatePlaceId => "DUPLICATE_PLACE_ID",
            Self::DuplicateActivityId => "DUPLICATE_ACTIVITY_ID",
            Self::UnknownPlace => "UNKNOWN_PLACE",
            Self::InvalidInitialMarking => "INVALID_INITIAL_MARKING",
            Self::CaselessActivity => "CASELESS_ACTIVITY",
            Self::CaseProbSum => "CASE_PROB_SUM",
            Self::NonPositiveRate => "NON_POSITIVE_RATE",
            Self::NonPositiveWeight => "NON_POSITIVE_WEIGHT",
            Self::NonExponential => "NON_EXPONENTIAL",
            Self::InputGateIncreases => "INPUT_GATE_INCREASES",
        }
    }
}

pub type SanReport = ValidationReport<SanViolation>;

/// Structural check of a SAN. Rates and case probabilities are checked at
/// the initial marking.
pub fn validate_san(model: &SanModel) -> SanReport {
    use SanViolation as V;
    let mut report = SanReport::new();
    let n_places = model.places.len();

    let mut seen = HashSet::new();
    for p in &model.places {
        if p.id.is_empty() {
            report.push(V::EmptyId, "place with empty id");
        } else if !seen.insert(p.id.as_str()) {
            report.push(V::DuplicatePlaceId, format!("place id `{}` repeated", p.id));
        }
    }
    let mut seen = HashSet::new();
    for a in &model.activities {
        if a.id.is_empty() {
            report.push(V::EmptyId, "activity with empty id");
        } else if !seen.insert(a.id.as_str()) {
            report.push(V::DuplicateActivityId, format!("activity id `{}` repeated", a.id));
        }
    }

    let marking_ok = model.initial_marking.len() == n_places;
    if !marking_ok {
        report.push(
            V::InvalidInitialMarking,
            format!(
                "initial marking has {} entries for {n_places} places",
                model.initial_marking.len()
            ),
        );
    }

    for a in &model.activities {
        let mut refs_ok = true;
        let mut check = |p: PlaceId| {
            if p.0 >= n_places {
                refs_ok = false;
            }
        };
        for g in &a.input_gates {
            g.predicate.0.iter().for_each(|c| check(c.place));
            g.function.iter().for_each(|op| check(op.place));
        }
        for c in &a.cases {
            c.probability.visit_places(&mut check);
            c.gate.ops.iter().for_each(|op| check(op.place));
        }
        if let Timing::Exponential { rate } = &a.timing {
            rate.visit_places(&mut check);
        }
        if !refs_ok {
            report.push(
                V::UnknownPlace,
                format!("activity `{}` references a place outside the model", a.id),
            );
        }

        for g in &a.input_gates {
            let increases = g.function.iter().any(|op| match op.kind {
                OpKind::Add => op.amount > 0,
                OpKind::Set => op.amount > 0,
                OpKind::Sub => false,
            });
            if increases {
                report.push(
                    V::InputGateIncreases,
                    format!("activity `{}` input function adds tokens", a.id),
                );
            }
        }

        if a.cases.is_empty() {
            report.push(V::CaselessActivity, format!("activity `{}` has no cases", a.id));
        }

        // Marking-dependent checks need resolvable references.
        let evaluable = refs_ok && marking_ok;
        match &a.timing {
            Timing::Exponential { rate } => {
                if evaluable && a.is_enabled(&model.initial_marking) {
                    let r = rate.eval(&model.initial_marking);
                    if !(r > 0.0 && r.is_finite()) {
                        report.push(
                            V::NonPositiveRate,
                            format!("activity `{}` rate {r} at the initial marking", a.id),
                        );
                    }
                }
            }
            Timing::General { family } => report.push(
                V::NonExponential,
                format!("activity `{}` uses `{family}` delays", a.id),
            ),
            Timing::Instantaneous { weight } => {
                if !(*weight > 0.0 && weight.is_finite()) {
                    report.push(
                        V::NonPositiveWeight,
                        format!("activity `{}` weight {weight}", a.id),
                    );
                }
            }
        }

        if evaluable && !a.cases.is_empty() {
            let sum: f64 = a
                .cases
                .iter()
                .map(|c| c.probability.eval(&model.initial_marking))
                .sum();
            let each_ok = a.cases.iter().all(|c| {
                let p = c.probability.eval(&model.initial_marking);
                (0.0..=1.0).contains(&p)
            });
            if (sum - 1.0).abs() > CASE_SUM_TOLERANCE || !each_ok {
                report.push(
                    V::CaseProbSum,
                    format!("activity `{}` case probabilities sum to {sum}", a.id),
                );
            }
        }
    }

    report
}
