//! Typed platoon organizations and instance-of checking.
//!
//! A [`PlatoonModel`] is a concrete convoy: one leader, followers, the
//! environment area it drives in, its social structure, geometry, navigation
//! policies and parameter sets. [`validate_platoon`] checks that such a model
//! is a well-formed instance of the platooning system model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::validation::{ValidationReport, ViolationCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvironmentArea {
    Urban,
    #[serde(alias = "Agricole")]
    Agricultural,
    Military,
}

impl EnvironmentArea {
    pub const ALL: [EnvironmentArea; 3] = [Self::Urban, Self::Agricultural, Self::Military];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SocialStructure {
    Team,
    Congregation,
    Coalition,
}

impl SocialStructure {
    pub const ALL: [SocialStructure; 3] = [Self::Team, Self::Congregation, Self::Coalition];
}

/// Social structures an organization may adopt in a given area.
pub fn allowed_structures(area: EnvironmentArea) -> BTreeSet<SocialStructure> {
    use SocialStructure::*;
    match area {
        EnvironmentArea::Urban => [Congregation, Coalition].into_iter().collect(),
        EnvironmentArea::Agricultural => [Congregation, Team, Coalition].into_iter().collect(),
        EnvironmentArea::Military => [Team, Congregation, Coalition].into_iter().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Line,
    #[serde(alias = "Level")]
    Echelon,
    Column,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Shape::Line => "Line",
            Shape::Echelon => "Echelon",
            Shape::Column => "Column",
        };
        f.write_str(s)
    }
}

/// Geometric arrangement of the convoy. Gaps are in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoConfiguration {
    pub shape: Shape,
    pub lateral_gap: f64,
    pub longitudinal_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationPolicy {
    pub name: String,
    pub from_shape: Shape,
    pub to_shape: Shape,
}

impl NavigationPolicy {
    /// Hold policies keep the current shape; their name starts with "hold".
    pub fn is_hold(&self) -> bool {
        self.name
            .get(..4)
            .is_some_and(|p| p.eq_ignore_ascii_case("hold"))
    }
}

/// Per-vehicle parameters: km/h, m/s², m/s² (negative), kg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityParameters {
    pub max_speed: f64,
    pub acceleration: f64,
    pub deceleration: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParameters {
    pub vehicle_count: u32,
    /// Minimum track curvature radius in meters; `inf` for straight track.
    pub curvature_radius_min: f64,
    pub max_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Leader,
    Follower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpec {
    #[serde(default)]
    pub name: String,
    pub role: Role,
    pub cardinality: u32,
    pub params: EntityParameters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DependabilityIndex {
    Availability,
    #[serde(rename = "MTTF")]
    Mttf,
    #[serde(rename = "MTTR")]
    Mttr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonModel {
    pub name: String,
    pub area: EnvironmentArea,
    pub structure: SocialStructure,
    /// Leader first: vehicles are numbered by position and the leader is 1.
    pub entities: Vec<EntitySpec>,
    pub geometry: GeoConfiguration,
    #[serde(default)]
    pub policies: Vec<NavigationPolicy>,
    pub system: SystemParameters,
    #[serde(default)]
    pub indices: BTreeSet<DependabilityIndex>,
    #[serde(default)]
    pub functional_requirements: Vec<String>,
    #[serde(default)]
    pub non_functional_requirements: Vec<String>,
}

impl PlatoonModel {
    pub fn leader(&self) -> Option<&EntitySpec> {
        self.entities.iter().find(|e| e.role == Role::Leader)
    }

    pub fn vehicle_total(&self) -> u64 {
        self.entities.iter().map(|e| u64::from(e.cardinality)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlatoonViolation {
    EmptyName,
    LeaderCardinality,
    LeaderPosition,
    ZeroCardinality,
    VehicleCountTooSmall,
    VehicleCountMismatch,
    StructureAreaMismatch,
    InvalidGap,
    InvalidEntityParameter,
    InvalidSystemParameter,
    PolicyShape,
}

impl ViolationCode for PlatoonViolation {
    fn code(&self) -> &'static str {
        match self {
            Self::EmptyName => "EMPTY_NAME",
            Self::LeaderCardinality => "LEADER_CARDINALITY",
            Self::LeaderPosition => "LEADER_POSITION",
            Self::ZeroCardinality => "ZERO_CARDINALITY",
            Self::VehicleCountTooSmall => "VEHICLE_COUNT_TOO_SMALL",
            Self::VehicleCountMismatch => "VEHICLE_COUNT_MISMATCH",
            Self::StructureAreaMismatch => "STRUCTURE_AREA_MISMATCH",
            Self::InvalidGap => "INVALID_GAP",
            Self::InvalidEntityParameter => "INVALID_ENTITY_PARAMETER",
            Self::InvalidSystemParameter => "INVALID_SYSTEM_PARAMETER",
            Self::PolicyShape => "POLICY_SHAPE",
        }
    }
}

pub type PlatoonReport = ValidationReport<PlatoonViolation>;

/// Check every organizational invariant of a platoon model.
pub fn validate_platoon(model: &PlatoonModel) -> PlatoonReport {
    use PlatoonViolation as V;
    let mut report = PlatoonReport::new();

    if model.name.trim().is_empty() {
        report.push(V::EmptyName, "platoon name is empty");
    }

    let leaders: Vec<(usize, &EntitySpec)> = model
        .entities
        .iter()
        .enumerate()
        .filter(|(_, e)| e.role == Role::Leader)
        .collect();
    match leaders.as_slice() {
        [] => report.push(V::LeaderCardinality, "no Leader entity"),
        [(idx, leader)] => {
            if leader.cardinality != 1 {
                report.push(
                    V::LeaderCardinality,
                    format!("Leader cardinality is {}, expected 1", leader.cardinality),
                );
            }
            if *idx != 0 {
                report.push(
                    V::LeaderPosition,
                    format!("Leader is entity #{}, expected position 1", idx + 1),
                );
            }
        }
        many => report.push(
            V::LeaderCardinality,
            format!("{} Leader entities, expected exactly one", many.len()),
        ),
    }

    for (i, e) in model.entities.iter().enumerate() {
        if e.cardinality == 0 {
            report.push(V::ZeroCardinality, format!("entity #{} has cardinality 0", i + 1));
        }
        check_entity_params(&mut report, i, &e.params);
    }

    let sys = &model.system;
    if sys.vehicle_count < 2 {
        report.push(
            V::VehicleCountTooSmall,
            format!("vehicle_count {} < 2", sys.vehicle_count),
        );
    }
    let total = model.vehicle_total();
    if total != u64::from(sys.vehicle_count) {
        report.push(
            V::VehicleCountMismatch,
            format!(
                "entity cardinalities sum to {total}, vehicle_count is {}",
                sys.vehicle_count
            ),
        );
    }
    if sys.curvature_radius_min.is_nan() || sys.curvature_radius_min <= 0.0 {
        report.push(
            V::InvalidSystemParameter,
            format!("curvature_radius_min {} must be > 0", sys.curvature_radius_min),
        );
    }
    if !(sys.max_distance > 0.0 && sys.max_distance.is_finite()) {
        report.push(
            V::InvalidSystemParameter,
            format!("max_distance {} must be finite and > 0", sys.max_distance),
        );
    }

    if !allowed_structures(model.area).contains(&model.structure) {
        report.push(
            V::StructureAreaMismatch,
            format!(
                "structure {:?} is not permitted in area {:?}",
                model.structure, model.area
            ),
        );
    }

    let geo = &model.geometry;
    for (label, gap) in [("lateral_gap", geo.lateral_gap), ("longitudinal_gap", geo.longitudinal_gap)] {
        if !(gap.is_finite() && gap >= 0.0) {
            report.push(V::InvalidGap, format!("{label} {gap} must be finite and >= 0"));
        }
    }

    for p in &model.policies {
        if p.from_shape == p.to_shape && !p.is_hold() {
            report.push(
                V::PolicyShape,
                format!("policy {} maps {} to itself", p.name, p.from_shape),
            );
        }
    }

    report
}

fn check_entity_params(report: &mut PlatoonReport, idx: usize, p: &EntityParameters) {
    let checks = [
        ("max_speed", p.max_speed, p.max_speed > 0.0),
        ("acceleration", p.acceleration, p.acceleration > 0.0),
        ("deceleration", p.deceleration, p.deceleration < 0.0),
        ("mass", p.mass, p.mass > 0.0),
    ];
    for (field, value, ok) in checks {
        if !(ok && value.is_finite()) {
            report.push(
                PlatoonViolation::InvalidEntityParameter,
                format!("entity #{} {field} = {value} out of range", idx + 1),
            );
        }
    }
}

/// Meta-level concept a platooning concept instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaConcept {
    Organization,
    OrganizationalStructure,
    OrganizationalRule,
    Communication,
    AgentType,
    AgentModel,
    OrganizationModel,
    Environment,
    /// The concept has no meta-level counterpart.
    Unmapped,
}

impl MetaConcept {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Organization => "Organization",
            Self::OrganizationalStructure => "OrganizationalStructure",
            Self::OrganizationalRule => "OrganizationalRule",
            Self::Communication => "Communication",
            Self::AgentType => "AgentType",
            Self::AgentModel => "AgentModel",
            Self::OrganizationModel => "OrganizationModel",
            Self::Environment => "Environment",
            Self::Unmapped => "--",
        }
    }
}

const CONCEPT_TABLE: [(&str, MetaConcept); 15] = [
    ("Platoon", MetaConcept::Organization),
    ("Structure", MetaConcept::OrganizationalStructure),
    ("Geo_Configuration", MetaConcept::OrganizationalRule),
    ("Navigation_Policy", MetaConcept::OrganizationalRule),
    ("Interaction", MetaConcept::Communication),
    ("Entity", MetaConcept::AgentType),
    ("Leader", MetaConcept::AgentType),
    ("Follower", MetaConcept::AgentType),
    ("Parameters", MetaConcept::OrganizationalRule),
    ("Entity_Parameters", MetaConcept::Unmapped),
    ("System_Parameters", MetaConcept::Unmapped),
    ("Model", MetaConcept::Unmapped),
    ("Entity_Model", MetaConcept::AgentModel),
    ("Platoon_Model", MetaConcept::OrganizationModel),
    ("Area", MetaConcept::Environment),
];

/// Look up the meta-level concept of a platooning concept name.
/// Returns `None` for names that are not platooning concepts at all.
pub fn meta_concept_of(concept: &str) -> Option<MetaConcept> {
    CONCEPT_TABLE
        .iter()
        .find(|(name, _)| *name == concept)
        .map(|(_, meta)| *meta)
}

/// Instance-of mapping restricted to the concepts `model` uses.
pub fn concept_instance_map(model: &PlatoonModel) -> BTreeMap<&'static str, MetaConcept> {
    let has_follower = model.entities.iter().any(|e| e.role == Role::Follower);
    CONCEPT_TABLE
        .iter()
        .filter(|(name, _)| match *name {
            "Navigation_Policy" => !model.policies.is_empty(),
            "Follower" | "Interaction" => has_follower,
            "Leader" => model.leader().is_some(),
            _ => true,
        })
        .map(|(name, meta)| (*name, *meta))
        .collect()
}
