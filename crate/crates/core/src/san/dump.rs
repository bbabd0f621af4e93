//! JSON dump of a SAN.

use serde::Serialize;

use super::model::{SanModel, Timing};

#[derive(Debug, Serialize)]
pub struct SanDump {
    pub places: Vec<PlaceDump>,
    pub activities: Vec<ActivityDump>,
}

#[derive(Debug, Serialize)]
pub struct PlaceDump {
    pub id: String,
    pub name: String,
    pub initial: u32,
}

#[derive(Debug, Serialize)]
pub struct ActivityDump {
    pub id: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_expr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    pub input_gates: Vec<InputGateDump>,
    pub cases: Vec<CaseDump>,
}

#[derive(Debug, Serialize)]
pub struct InputGateDump {
    pub predicate: Vec<String>,
    pub function: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct CaseDump {
    pub prob_expr: String,
    pub output_ops: Vec<String>,
}

impl SanDump {
    pub fn new(model: &SanModel) -> Self {
        let names = model.place_names();
        let places = model
            .places
            .iter()
            .enumerate()
            .map(|(i, p)| PlaceDump {
                id: p.id.clone(),
                name: p.name.clone(),
                initial: model.initial_marking.as_slice().get(i).copied().unwrap_or(0),
            })
            .collect();
        let activities = model
            .activities
            .iter()
            .map(|a| {
                let (kind, rate_expr, weight) = match &a.timing {
                    Timing::Exponential { rate } => ("timed".to_string(), Some(rate.render(&names)), None),
                    Timing::General { family } => (format!("timed:{family}"), None, None),
                    Timing::Instantaneous { weight } => ("instantaneous".to_string(), None, Some(*weight)),
                };
                ActivityDump {
                    id: a.id.clone(),
                    kind,
                    rate_expr,
                    weight,
                    input_gates: a
                        .input_gates
                        .iter()
                        .map(|g| InputGateDump {
                            predicate: g.predicate.0.iter().map(|c| c.render(&names)).collect(),
                            function: g.function.iter().map(|op| op.render(&names)).collect(),
                        })
                        .collect(),
                    cases: a
                        .cases
                        .iter()
                        .map(|c| CaseDump {
                            prob_expr: c.probability.render(&names),
                            output_ops: c.gate.ops.iter().map(|op| op.render(&names)).collect(),
                        })
                        .collect(),
                }
            })
            .collect();
        SanDump { places, activities }
    }
}

/// Pretty-printed JSON dump of `model`.
pub fn dump_san(model: &SanModel) -> String {
    serde_json::to_string_pretty(&SanDump::new(model)).expect("dump is plain data")
}
