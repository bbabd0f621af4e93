//! Scenario files: a platoon, its disturbance profile, the measures to
//! compute and an optional parameter sweep, in TOML.
//!
//! ```toml
//! schema_version = 1
//! method = "both"            # analytic | simulation | both
//!
//! [platoon]                  # metamodel fields
//! [disturbances]             # rates per hour, MTTRs in hours
//! [[measures]]
//! name = "availability"
//! kind = "steady_state"      # steady_state | instant (t) | interval_average (horizon) | mttf
//! [sim]                      # replications, seed, confidence_level, horizon
//! [sweep]                    # parameter, scale + min/max/points or values
//! ```

use std::fmt;

use serde::Deserialize;
use thiserror::Error;
use toml::{Table, Value};

use crate::generation::DisturbanceProfile;
use crate::measures::{MeasureKind, MeasureSpec, RewardVariable};
use crate::metamodel::{validate_platoon, PlatoonModel, PlatoonViolation, Role};
use crate::simulation::{SimConfig, DEFAULT_CONFIDENCE, DEFAULT_REPLICATIONS, DEFAULT_SEED};
use crate::statespace::DEFAULT_STATE_LIMIT;

pub const SCHEMA_VERSION: u32 = 1;
/// Overrides the default seed when neither the command line nor the file sets one.
pub const SEED_ENV: &str = "PLATOON_SAN_SEED";

/// Path whose numeric value also drives the follower cardinality.
pub const VEHICLE_COUNT_PATH: &str = "platoon.system.vehicle_count";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    Simulation,
    #[default]
    Both,
}

impl Method {
    pub fn evaluators(self) -> &'static [&'static str] {
        match self {
            Method::Analytic => &["analytic"],
            Method::Simulation => &["simulation"],
            Method::Both => &["analytic", "simulation"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Simulation => "simulation",
            Method::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "analytic" => Some(Method::Analytic),
            "simulation" => Some(Method::Simulation),
            "both" => Some(Method::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Range { scale: Scale, min: f64, max: f64, points: usize },
    Values(Vec<f64>),
}

impl Grid {
    /// Grid values in ascending order; range endpoints are exact.
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => {
                let mut v = v.clone();
                v.sort_by(f64::total_cmp);
                v
            }
            Grid::Range { scale, min, max, points } => {
                let last = points - 1;
                (0..*points)
                    .map(|i| {
                        if i == 0 {
                            return *min;
                        }
                        if i == last {
                            return *max;
                        }
                        let f = i as f64 / last as f64;
                        match scale {
                            Scale::Linear => min + f * (max - min),
                            Scale::Log => (min.ln() + f * (max.ln() - min.ln())).exp(),
                        }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: String,
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub platoon: PlatoonModel,
    pub disturbances: DisturbanceProfile,
    pub measures: Vec<MeasureSpec>,
    pub method: Method,
    pub sim: SimConfig,
    pub state_limit: usize,
    pub sweep: Option<SweepSpec>,
}

/// One problem found while validating a scenario, tagged with the workflow
/// step it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub step: u8,
    pub code: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}: {}", self.step, self.code, self.message)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScenarioError {
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("invalid scenario:\n{}", issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Validation { issues: Vec<Issue> },
}

impl ScenarioError {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::Parse { .. } => "PARSE_ERROR",
            ScenarioError::Validation { .. } => "VALIDATION_ERROR",
        }
    }

    /// Earliest workflow step implicated.
    pub fn step(&self) -> u8 {
        match self {
            ScenarioError::Parse { .. } => 1,
            ScenarioError::Validation { issues } => issues.iter().map(|i| i.step).min().unwrap_or(1),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    #[serde(default)]
    method: Method,
    state_limit: Option<usize>,
    platoon: PlatoonModel,
    disturbances: DisturbanceProfile,
    #[serde(default)]
    measures: Vec<RawMeasure>,
    sim: Option<RawSim>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawKind {
    SteadyState,
    Instant,
    IntervalAverage,
    Mttf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    name: String,
    kind: RawKind,
    t: Option<f64>,
    horizon: Option<f64>,
    reward: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    replications: Option<usize>,
    seed: Option<u64>,
    confidence_level: Option<f64>,
    horizon: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    scale: Option<Scale>,
    min: Option<f64>,
    max: Option<f64>,
    points: Option<usize>,
    values: Option<Vec<f64>>,
}

/// Seed used when the file leaves it unset: `PLATOON_SAN_SEED`, else 42.
pub fn default_seed() -> Result<u64, String> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map_err(|_| format!("{SEED_ENV}=`{s}` is not an unsigned 64-bit integer")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let document: Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    Scenario::from_document(document, Some(text))
}

pub fn load_scenario_file(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Parse {
        line: None,
        message: format!("{}: {e}", path.display()),
    })?;
    load_scenario(&text)
}

fn platoon_step(v: PlatoonViolation) -> u8 {
    use PlatoonViolation as V;
    match v {
        V::StructureAreaMismatch | V::PolicyShape => 1,
        V::EmptyName | V::LeaderCardinality | V::LeaderPosition | V::ZeroCardinality => 2,
        V::VehicleCountTooSmall
        | V::VehicleCountMismatch
        | V::InvalidGap
        | V::InvalidEntityParameter
        | V::InvalidSystemParameter => 4,
    }
}

impl Scenario {
    fn from_document(document: Table, text: Option<&str>) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = Value::Table(document).try_into().map_err(|e: toml::de::Error| {
            // Spans only exist when deserializing straight from text.
            let line = text.and_then(|t| {
                toml::from_str::<RawScenario>(t).err().and_then(|e| e.span()).map(|s| line_of(t, s.start))
            });
            ScenarioError::Parse { line, message: e.message().trim().to_string() }
        })?;

        let mut issues = Vec::new();
        let mut issue = |step: u8, code: &str, message: String| {
            issues.push(Issue { step, code: code.to_string(), message })
        };

        if raw.schema_version != SCHEMA_VERSION {
            issue(1, "SCHEMA_VERSION", format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", raw.schema_version));
        }
        for v in validate_platoon(&raw.platoon).violations() {
            issue(platoon_step(v.code), crate::validation::ViolationCode::code(&v.code), v.message.clone());
        }
        if let Err(e) = raw.disturbances.check() {
            issue(4, e.code(), e.to_string());
        }

        if raw.measures.is_empty() {
            issue(3, "NO_MEASURES", "at least one [[measures]] entry is required".into());
        }
        let mut measures = Vec::new();
        for m in &raw.measures {
            let kind = match (m.kind, m.t, m.horizon) {
                (RawKind::SteadyState, None, None) => Some(MeasureKind::SteadyState),
                (RawKind::Mttf, None, None) => Some(MeasureKind::Mttf),
                (RawKind::Instant, Some(t), None) => Some(MeasureKind::InstantOfTime { t }),
                (RawKind::IntervalAverage, None, Some(horizon)) => Some(MeasureKind::IntervalAverage { horizon }),
                (RawKind::Instant, _, _) => {
                    issue(6, "INVALID_MEASURE", format!("measure `{}`: instant requires `t` only", m.name));
                    None
                }
                (RawKind::IntervalAverage, _, _) => {
                    issue(6, "INVALID_MEASURE", format!("measure `{}`: interval_average requires `horizon` only", m.name));
                    None
                }
                _ => {
                    issue(6, "INVALID_MEASURE", format!("measure `{}` takes neither `t` nor `horizon`", m.name));
                    None
                }
            };
            if m.name.trim().is_empty() {
                issue(3, "INVALID_MEASURE", "measure name must not be empty".into());
            }
            if let Some(r) = m.reward.as_deref().filter(|r| *r != "availability") {
                issue(3, "INVALID_MEASURE", format!("measure `{}`: unknown reward `{r}` (only `availability`)", m.name));
            }
            if let Some(kind) = kind {
                if let Err(msg) = kind.check() {
                    issue(6, "INVALID_MEASURE", format!("measure `{}`: {msg}", m.name));
                }
                let variable = RewardVariable { name: m.name.clone(), ..RewardVariable::availability() };
                measures.push(MeasureSpec::new(variable, kind));
            }
        }

        let raw_sim = raw.sim.unwrap_or_default();
        let seed = match raw_sim.seed {
            Some(s) => s,
            None => default_seed().unwrap_or_else(|msg| {
                issue(4, "INVALID_SEED", msg);
                DEFAULT_SEED
            }),
        };
        let sim = SimConfig {
            replications: raw_sim.replications.unwrap_or(DEFAULT_REPLICATIONS),
            horizon: raw_sim.horizon,
            seed,
            confidence_level: raw_sim.confidence_level.unwrap_or(DEFAULT_CONFIDENCE),
        };
        if let Err(e) = sim.check() {
            issue(7, e.code(), e.to_string());
        }
        let state_limit = raw.state_limit.unwrap_or(DEFAULT_STATE_LIMIT);
        if state_limit == 0 {
            issue(7, "INVALID_CONFIG", "state_limit must be >= 1".into());
        }

        let sweep = raw.sweep.and_then(|s| {
            let grid = match (s.values, s.scale, s.min, s.max, s.points) {
                (Some(values), None, None, None, None) => {
                    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                        issue(4, "INVALID_SWEEP", "sweep values must be a non-empty list of finite numbers".into());
                        return None;
                    }
                    Grid::Values(values)
                }
                (None, scale, Some(min), Some(max), Some(points)) => {
                    let scale = scale.unwrap_or(Scale::Linear);
                    if min >= max || !min.is_finite() || !max.is_finite() {
                        issue(4, "INVALID_SWEEP", format!("sweep needs finite min < max (got {min}, {max})"));
                    }
                    if points < 2 {
                        issue(4, "INVALID_SWEEP", format!("sweep needs points >= 2 (got {points})"));
                    }
                    if scale == Scale::Log && min <= 0.0 {
                        issue(4, "INVALID_SWEEP", format!("log sweep needs min > 0 (got {min})"));
                    }
                    Grid::Range { scale, min, max, points }
                }
                _ => {
                    issue(4, "INVALID_SWEEP", "sweep takes either `values` or `min`, `max`, `points` (and `scale`)".into());
                    return None;
                }
            };
            Some(SweepSpec { parameter: s.parameter, grid })
        });

        let scenario = Scenario {
            platoon: raw.platoon,
            disturbances: raw.disturbances,
            measures,
            method: raw.method,
            sim,
            state_limit,
            sweep,
        };
        if let Some(s) = &scenario.sweep {
            if let Err(message) = numeric_at(&scenario.to_document(), &s.parameter) {
                issues.push(Issue { step: 4, code: "INVALID_SWEEP".into(), message });
            }
        }
        if !issues.is_empty() {
            return Err(ScenarioError::Validation { issues });
        }
        Ok(scenario)
    }

    /// Whether the sweepable field at `path` holds an integer.
    pub fn is_integer_parameter(&self, path: &str) -> Result<bool, String> {
        numeric_at(&self.to_document(), path)
    }

    /// The scenario as a TOML table, reflecting any edits made since loading.
    /// The sweep block and the seed are left out.
    pub fn to_document(&self) -> Table {
        let mut doc = Table::new();
        doc.insert("schema_version".into(), Value::Integer(i64::from(SCHEMA_VERSION)));
        doc.insert("method".into(), Value::String(self.method.name().into()));
        doc.insert("state_limit".into(), Value::Integer(self.state_limit.try_into().unwrap_or(i64::MAX)));
        doc.insert("platoon".into(), Value::try_from(&self.platoon).expect("platoon is plain data"));
        doc.insert("disturbances".into(), Value::try_from(&self.disturbances).expect("profile is plain data"));
        let measures = self
            .measures
            .iter()
            .map(|m| {
                let mut t = Table::new();
                t.insert("name".into(), Value::String(m.variable.name.clone()));
                let (kind, field) = match m.kind {
                    MeasureKind::SteadyState => ("steady_state", None),
                    MeasureKind::Mttf => ("mttf", None),
                    MeasureKind::InstantOfTime { t } => ("instant", Some(("t", t))),
                    MeasureKind::IntervalAverage { horizon } => ("interval_average", Some(("horizon", horizon))),
                };
                t.insert("kind".into(), Value::String(kind.into()));
                if let Some((k, v)) = field {
                    t.insert(k.into(), Value::Float(v));
                }
                Value::Table(t)
            })
            .collect();
        doc.insert("measures".into(), Value::Array(measures));
        let mut sim = Table::new();
        sim.insert("replications".into(), Value::Integer(self.sim.replications.try_into().unwrap_or(i64::MAX)));
        sim.insert("confidence_level".into(), Value::Float(self.sim.confidence_level));
        if let Some(h) = self.sim.horizon {
            sim.insert("horizon".into(), Value::Float(h));
        }
        doc.insert("sim".into(), Value::Table(sim));
        doc
    }

    /// Copy of the scenario with the numeric field at `path` set to `value`.
    /// Integer fields take the rounded value; setting the vehicle count also
    /// resizes the single follower entity.
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<Scenario, ScenarioError> {
        let invalid = |message: String| ScenarioError::Validation {
            issues: vec![Issue { step: 4, code: "INVALID_SWEEP".into(), message }],
        };
        let mut doc = self.to_document();
        let slot = walk(&mut doc, path).map_err(invalid)?;
        *slot = match slot {
            Value::Integer(_) => Value::Integer(value.round() as i64),
            Value::Float(_) => Value::Float(value),
            other => return Err(invalid(format!("`{path}` holds {}, not a number", other.type_str()))),
        };
        if path == VEHICLE_COUNT_PATH {
            resize_followers(&mut doc, value.round() as i64).map_err(invalid)?;
        }
        let mut next = Scenario::from_document(doc, None)?;
        next.sim.seed = self.sim.seed;
        next.sweep = self.sweep.clone();
        Ok(next)
    }
}

fn walk<'a>(doc: &'a mut Table, path: &str) -> Result<&'a mut Value, String> {
    let mut parts = path.split('.');
    let first = parts.next().unwrap_or_default();
    let mut cur = doc.get_mut(first).ok_or_else(|| format!("`{path}`: no field `{first}`"))?;
    for part in parts {
        cur = match cur {
            Value::Table(t) => t.get_mut(part),
            Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| format!("`{path}`: no field `{part}` (set it explicitly to sweep it)"))?;
    }
    Ok(cur)
}

/// Whether the numeric field at `path` is an integer.
fn numeric_at(doc: &Table, path: &str) -> Result<bool, String> {
    let mut doc = doc.clone();
    match walk(&mut doc, path)? {
        Value::Integer(_) => Ok(true),
        Value::Float(_) => Ok(false),
        other => Err(format!("`{path}` holds {}, not a number", other.type_str())),
    }
}

fn resize_followers(doc: &mut Table, n: i64) -> Result<(), String> {
    let Some(Value::Array(entities)) = doc.get_mut("platoon").and_then(|p| p.get_mut("entities")) else {
        return Ok(());
    };
    let role_of = |e: &Value| e.get("role").and_then(Value::as_str).map(str::to_owned);
    let leaders: i64 = entities
        .iter()
        .filter(|e| role_of(e).as_deref() == Some(role_name(Role::Leader)))
        .filter_map(|e| e.get("cardinality").and_then(Value::as_integer))
        .sum();
    let mut followers: Vec<&mut Value> =
        entities.iter_mut().filter(|e| role_of(e).as_deref() == Some(role_name(Role::Follower))).collect();
    match followers.as_mut_slice() {
        [one] => {
            if let Some(t) = one.as_table_mut() {
                t.insert("cardinality".into(), Value::Integer((n - leaders).max(0)));
            }
            Ok(())
        }
        _ => Err(format!(
            "sweeping {VEHICLE_COUNT_PATH} needs exactly one follower entity to resize (found {})",
            followers.len()
        )),
    }
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Leader => "Leader",
        Role::Follower => "Follower",
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const URBAN: &str = r#"
schema_version = 1
method = "analytic"

[platoon]
name = "Convoy_Urban"
area = "Urban"
structure = "Congregation"
indices = ["Availability", "MTTF"]

[[platoon.entities]]
name = "V_Leader"
role = "Leader"
cardinality = 1
params = { max_speed = 50.0, acceleration = 1.0, deceleration = -3.0, mass = 500.0 }

[[platoon.entities]]
name = "V_Follower"
role = "Follower"
cardinality = 2
params = { max_speed = 50.0, acceleration = 1.0, deceleration = -3.0, mass = 500.0 }

[platoon.geometry]
shape = "Line"
lateral_gap = 3.0
longitudinal_gap = 0.0

[[platoon.policies]]
name = "Line_to_Level"
from_shape = "Line"
to_shape = "Level"

[platoon.system]
vehicle_count = 3
curvature_radius_min = 15.0
max_distance = 1000.0

[disturbances]
external_event_rate = 1.0
external_mttr = 1.0
mech_failure_rate_per_vehicle = 0.0
mech_mttr = 1.0

[[measures]]
name = "availability"
kind = "steady_state"
"#;

    #[test]
    fn loads_reference_document() {
        let s = load_scenario(URBAN).unwrap();
        assert_eq!(s.platoon.system.vehicle_count, 3);
        assert_eq!(s.platoon.geometry.lateral_gap, 3.0);
        assert_eq!(s.method, Method::Analytic);
        assert_eq!(s.measures, vec![MeasureSpec::availability(MeasureKind::SteadyState)]);
        assert_eq!(s.sim.replications, 10_000);
        assert_eq!(s.sim.confidence_level, 0.95);
        assert_eq!(s.state_limit, DEFAULT_STATE_LIMIT);
    }

    #[test]
    fn parse_error_reports_line() {
        let text = URBAN.replace("cardinality = 2", "cardinality = ");
        let err = load_scenario(&text).unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        let ScenarioError::Parse { line, .. } = err else { unreachable!() };
        let expected = text.lines().position(|l| l.starts_with("cardinality = ") && l.len() == 14).unwrap() + 1;
        assert_eq!(line, Some(expected));
    }

    #[test]
    fn missing_field_is_parse_error() {
        let err = load_scenario(&URBAN.replace("mech_mttr = 1.0\n", "")).unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        assert!(err.to_string().contains("mech_mttr"), "{err}");
    }

    #[test]
    fn single_vehicle_is_rejected() {
        let text = URBAN.replace("vehicle_count = 3", "vehicle_count = 1").replace("cardinality = 2", "cardinality = 0");
        let err = load_scenario(&text).unwrap_err();
        assert_eq!(err.code(), "VALIDATION_ERROR");
        assert!(err.to_string().contains("VEHICLE_COUNT_TOO_SMALL"), "{err}");
        assert_eq!(err.step(), 2);
    }

    #[test]
    fn measure_and_sweep_checks() {
        let text = format!("{URBAN}\n[[measures]]\nname = \"a1\"\nkind = \"instant\"\n\n[sweep]\nparameter = \"disturbances.nope\"\nmin = 1.0\nmax = 0.5\npoints = 1\n");
        let ScenarioError::Validation { issues } = load_scenario(&text).unwrap_err() else { panic!() };
        let codes: Vec<&str> = issues.iter().map(|i| i.code.as_str()).collect();
        assert_eq!(codes, vec!["INVALID_MEASURE", "INVALID_SWEEP", "INVALID_SWEEP", "INVALID_SWEEP"]);
    }

    #[test]
    fn log_grid_has_exact_endpoints() {
        let g = Grid::Range { scale: Scale::Log, min: 0.01, max: 10.0, points: 25 };
        let v = g.values();
        assert_eq!(v.len(), 25);
        assert_eq!((v[0], v[24]), (0.01, 10.0));
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!((v[16] - 1.0).abs() < 1e-12);
        let lin = Grid::Range { scale: Scale::Linear, min: 0.0, max: 1.0, points: 5 }.values();
        assert_eq!(lin, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(Grid::Values(vec![3.0, 1.0, 2.0]).values(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn substitution_round_trips() {
        let s = load_scenario(URBAN).unwrap();
        let t = s.with_parameter("disturbances.external_mttr", 0.25).unwrap();
        assert_eq!(t.disturbances.external_mttr, 0.25);
        let four = s.with_parameter(VEHICLE_COUNT_PATH, 3.6).unwrap();
        assert_eq!(four.platoon.system.vehicle_count, 4);
        assert_eq!(four.platoon.entities[1].cardinality, 3);
        let speed = s.with_parameter("platoon.entities.0.params.max_speed", 30.0).unwrap();
        assert_eq!(speed.platoon.entities[0].params.max_speed, 30.0);
        assert!(s.with_parameter("platoon.name", 1.0).is_err());
        assert!(s.with_parameter("disturbances.external_mttr", 0.0).is_err());
    }
}
