//! Runs scenarios end to end: generate the SAN, evaluate every measure with
//! every requested method, and report one row per result.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::generation::{generate_san, GeneratedSan};
use crate::measures::{evaluate, EvalSettings, EvaluationResult, MeasureSpec, ANALYTIC, SIMULATION};
use crate::scenario::{Method, Scenario, ScenarioError};

/// Backends disagree when their values differ by more than this many CI
/// half-widths.
pub const AGREEMENT_WIDTHS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub sweep_param: Option<String>,
    pub sweep_value: Option<f64>,
    pub measure: String,
    pub method: String,
    pub value: Option<f64>,
    pub error_bound: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub step: u8,
    pub code: String,
    pub message: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}: {}", self.step, self.code, self.message)
    }
}

impl std::error::Error for PipelineError {}

impl PipelineError {
    pub fn new(step: u8, code: &str, message: impl Into<String>) -> Self {
        Self { step, code: code.to_string(), message: message.into() }
    }

    /// Steps 1 to 4 cover the model description; anything later is a
    /// runtime failure.
    pub fn is_validation(&self) -> bool {
        self.step <= 4
    }
}

impl From<ScenarioError> for PipelineError {
    fn from(e: ScenarioError) -> Self {
        let message = match &e {
            ScenarioError::Validation { issues } => {
                issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
            }
            ScenarioError::Parse { .. } => e.to_string(),
        };
        PipelineError::new(e.step(), e.code(), message)
    }
}

/// Command-line overrides, applied on top of the scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub state_limit: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, scenario: &mut Scenario) -> Result<(), PipelineError> {
        if let Some(m) = self.method {
            scenario.method = m;
        }
        if let Some(s) = self.seed {
            scenario.sim.seed = s;
        }
        if let Some(r) = self.replications {
            scenario.sim.replications = r;
        }
        if let Some(l) = self.state_limit {
            scenario.state_limit = l;
        }
        scenario.sim.check().map_err(|e| PipelineError::new(7, e.code(), e.to_string()))?;
        if scenario.state_limit == 0 {
            return Err(PipelineError::new(7, "INVALID_CONFIG", "state_limit must be >= 1"));
        }
        Ok(())
    }
}

fn settings(scenario: &Scenario) -> EvalSettings {
    EvalSettings { sim: scenario.sim.clone(), state_limit: scenario.state_limit, ..EvalSettings::default() }
}

/// Step 5.
pub fn generate(scenario: &Scenario) -> Result<GeneratedSan, PipelineError> {
    generate_san(&scenario.platoon, &scenario.disturbances).map_err(|e| PipelineError::new(5, e.code(), e.to_string()))
}

/// Steps 6 and 7 for one measure and method.
pub fn evaluate_measure(
    generated: &GeneratedSan,
    spec: &MeasureSpec,
    method: &str,
    settings: &EvalSettings,
) -> Result<EvaluationResult, PipelineError> {
    if let Err(msg) = spec.kind.check() {
        return Err(PipelineError::new(6, "INVALID_MEASURE", msg));
    }
    evaluate(generated, spec, method, settings).map_err(|e| PipelineError::new(7, e.code(), e.to_string()))
}

fn detail_of(r: &EvaluationResult) -> String {
    r.diagnostics.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn push_detail(detail: &mut String, item: &str) {
    if !detail.is_empty() {
        detail.push(';');
    }
    detail.push_str(item);
}

/// Whether a simulation estimate covers the analytic value within
/// `AGREEMENT_WIDTHS` half-widths.
pub fn agrees(analytic: f64, simulated: f64, half_width: f64) -> bool {
    (analytic - simulated).abs() <= AGREEMENT_WIDTHS * half_width
}

type Point<'a> = Option<(&'a str, f64)>;

fn row(point: Point<'_>, measure: &str, method: &str) -> ReportRow {
    ReportRow {
        sweep_param: point.map(|(p, _)| p.to_string()),
        sweep_value: point.map(|(_, v)| v),
        measure: measure.to_string(),
        method: method.to_string(),
        value: None,
        error_bound: None,
        detail: String::new(),
    }
}

fn evaluate_all(
    scenario: &Scenario,
    generated: &GeneratedSan,
    point: Point<'_>,
    mut on_error: impl FnMut(PipelineError, &mut ReportRow) -> Result<(), PipelineError>,
) -> Result<Vec<ReportRow>, PipelineError> {
    let settings = settings(scenario);
    let mut rows = Vec::new();
    for spec in &scenario.measures {
        let mut analytic_value = None;
        for &method in scenario.method.evaluators() {
            let mut r = row(point, &spec.variable.name, method);
            match evaluate_measure(generated, spec, method, &settings) {
                Ok(res) => {
                    r.value = Some(res.value);
                    r.error_bound = Some(res.error_bound);
                    r.detail = detail_of(&res);
                    if method == ANALYTIC {
                        analytic_value = Some(res.value);
                    }
                    if let (SIMULATION, Some(a)) = (method, analytic_value) {
                        push_detail(&mut r.detail, &format!("agree={}", agrees(a, res.value, res.error_bound)));
                    }
                }
                Err(e) => on_error(e, &mut r)?,
            }
            rows.push(r);
        }
    }
    Ok(rows)
}

/// Steps 5 to 7 on a validated scenario; any failure aborts the run.
/// A sweep block, if present, is ignored.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<ReportRow>, PipelineError> {
    let generated = generate(scenario)?;
    evaluate_all(scenario, &generated, None, |e, _| Err(e))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub rows: Vec<ReportRow>,
    /// Collapsed grid points and other remarks, for the diagnostic stream.
    pub notes: Vec<String>,
}

fn is_structural(path: &str) -> bool {
    path.starts_with("platoon.geometry") || path.starts_with("platoon.policies")
}

/// Evaluate every measure at every grid point of the scenario's sweep.
/// A failing point records its error in the detail column and the sweep
/// carries on.
pub fn run_sweep(scenario: &Scenario) -> Result<SweepReport, PipelineError> {
    let sweep = scenario
        .sweep
        .as_ref()
        .ok_or_else(|| PipelineError::new(4, "INVALID_SWEEP", "scenario has no [sweep] block"))?;
    let path = sweep.parameter.as_str();
    let mut report = SweepReport::default();
    let structural = is_structural(path);
    if structural {
        report.notes.push(format!(
            "`{path}` does not affect the generated dependability model; every point evaluates the same chain"
        ));
    }

    let integer = scenario
        .is_integer_parameter(path)
        .map_err(|msg| PipelineError::new(4, "INVALID_SWEEP", msg))?;
    let mut seen = BTreeSet::new();
    let mut grid = Vec::new();
    for v in sweep.grid.values() {
        let value = if integer { v.round() } else { v };
        if seen.insert(value.to_bits()) {
            grid.push(value);
        } else {
            report.notes.push(format!("`{path}` = {v} rounds to {value}, already evaluated; collapsed"));
        }
    }
    grid.sort_by(f64::total_cmp);

    for value in grid {
        let point = Some((path, value));
        let fail_all = |e: &PipelineError| -> Vec<ReportRow> {
            scenario
                .measures
                .iter()
                .flat_map(|m| scenario.method.evaluators().iter().map(move |method| (m, *method)))
                .map(|(m, method)| ReportRow { detail: format!("error={e}"), ..row(point, &m.variable.name, method) })
                .collect()
        };
        let point_scenario = match scenario.with_parameter(path, value) {
            Ok(s) => s,
            Err(e) => {
                report.rows.extend(fail_all(&PipelineError::from(e)));
                continue;
            }
        };
        let generated = match generate(&point_scenario) {
            Ok(g) => g,
            Err(e) => {
                report.rows.extend(fail_all(&e));
                continue;
            }
        };
        let mut rows = evaluate_all(&point_scenario, &generated, point, |e, r| {
            r.detail = format!("error={e}");
            Ok(())
        })?;
        if structural {
            rows.iter_mut().for_each(|r| push_detail(&mut r.detail, "noop=true"));
        }
        report.rows.extend(rows);
    }
    Ok(report)
}

pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["sweep_param", "sweep_value", "measure", "method", "value", "error_bound", "detail"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_json(rows: &[ReportRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}
