//! Compile a platoon and its disturbance profile into a SAN.
//!
//! The generated network has three modules sharing three places:
//!
//! * nominal behavior: `P_nominal` holds the convoy token while it drives;
//! * external disturbances: `ext_arrival` moves the convoy token into
//!   `P_ext_blocked` (pedestrian, light, intersection), `ext_clear` moves it
//!   back;
//! * mechanical failures: `P_mech_failed` counts failed vehicles, `mech_fail`
//!   fires at rate `(n - failed) * lambda` and `mech_repair` restores one
//!   vehicle at a time.
//!
//! The convoy is up iff it is neither blocked nor missing a vehicle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metamodel::{validate_platoon, PlatoonModel, PlatoonReport};
use crate::san::{
    Activity, Case, Cmp, Condition, Expr, Guard, Marking, Place, PlaceId, SanModel, TokenOp,
};

/// Leader speed (km/h) at which `speed_coupling` doubles the disturbance rate.
pub const REFERENCE_SPEED_KMH: f64 = 50.0;

pub const P_NOMINAL: &str = "P_nominal";
pub const P_EXT_BLOCKED: &str = "P_ext_blocked";
pub const P_MECH_FAILED: &str = "P_mech_failed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairPolicy {
    /// One repair crew: repair rate independent of the failed count.
    #[default]
    SingleCrew,
    /// One crew per failed vehicle: rate `failed * mu`.
    PerVehicle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCriterion {
    /// Down on any external blockage or any mechanical failure.
    #[default]
    AnyDisturbance,
    /// Down only once every vehicle has failed mechanically.
    AllVehiclesFailed,
}

/// Rates are per hour, MTTRs in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    pub external_event_rate: f64,
    pub external_mttr: f64,
    pub mech_failure_rate_per_vehicle: f64,
    pub mech_mttr: f64,
    #[serde(default)]
    pub speed_coupling: f64,
    #[serde(default)]
    pub repair_policy: RepairPolicy,
    #[serde(default)]
    pub failure_criterion: FailureCriterion,
}

impl DisturbanceProfile {
    pub fn check(&self) -> Result<(), GenerationError> {
        let rates = [
            ("external_event_rate", self.external_event_rate),
            ("mech_failure_rate_per_vehicle", self.mech_failure_rate_per_vehicle),
            ("speed_coupling", self.speed_coupling),
        ];
        for (field, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GenerationError::InvalidProfile(format!("{field} = {v} must be finite and >= 0")));
            }
        }
        for (field, v) in [("external_mttr", self.external_mttr), ("mech_mttr", self.mech_mttr)] {
            if v.is_nan() || v <= 0.0 {
                return Err(GenerationError::DivideByZero { field });
            }
            if !v.is_finite() {
                return Err(GenerationError::InvalidProfile(format!("{field} = {v} must be finite")));
            }
        }
        if self.external_event_rate == 0.0 && self.mech_failure_rate_per_vehicle == 0.0 {
            return Err(GenerationError::InvalidProfile(
                "at least one of external_event_rate and mech_failure_rate_per_vehicle must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSet {
    pub ext_arrival: f64,
    pub ext_clear: f64,
    pub mech_fail: f64,
    pub mech_repair: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GenerationError {
    #[error("{field} must be > 0 (its reciprocal is a rate)")]
    DivideByZero { field: &'static str },
    #[error("invalid disturbance profile: {0}")]
    InvalidProfile(String),
    #[error("invalid platoon:\n{0}")]
    InvalidPlatoon(PlatoonReport),
}

impl GenerationError {
    pub fn code(&self) -> &'static str {
        match self {
            GenerationError::DivideByZero { .. } => "DIVIDE_BY_ZERO",
            GenerationError::InvalidProfile(_) => "INVALID_PROFILE",
            GenerationError::InvalidPlatoon(_) => "INVALID_PLATOON",
        }
    }
}

pub fn derive_rates(platoon: &PlatoonModel, profile: &DisturbanceProfile) -> Result<RateSet, GenerationError> {
    for (field, v) in [("external_mttr", profile.external_mttr), ("mech_mttr", profile.mech_mttr)] {
        if v.is_nan() || v <= 0.0 {
            return Err(GenerationError::DivideByZero { field });
        }
    }
    let leader_speed = platoon.leader().map_or(0.0, |l| l.params.max_speed);
    Ok(RateSet {
        ext_arrival: profile.external_event_rate
            * (1.0 + profile.speed_coupling * leader_speed / REFERENCE_SPEED_KMH),
        ext_clear: 1.0 / profile.external_mttr,
        mech_fail: profile.mech_failure_rate_per_vehicle,
        mech_repair: 1.0 / profile.mech_mttr,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSan {
    pub san: SanModel,
    pub up_predicate: Guard,
    /// Activity id → what it models.
    pub provenance: BTreeMap<String, String>,
    pub rates: RateSet,
    pub vehicle_count: u32,
}

impl GeneratedSan {
    pub fn is_up(&self, m: &Marking) -> bool {
        self.up_predicate.holds(m)
    }
}

pub fn generate_san(platoon: &PlatoonModel, profile: &DisturbanceProfile) -> Result<GeneratedSan, GenerationError> {
    let report = validate_platoon(platoon);
    if !report.is_empty() {
        return Err(GenerationError::InvalidPlatoon(report));
    }
    profile.check()?;
    let rates = derive_rates(platoon, profile)?;
    let n = platoon.system.vehicle_count;

    let nominal = PlaceId(0);
    let blocked = PlaceId(1);
    let failed = PlaceId(2);
    let places = vec![
        Place { id: P_NOMINAL.into(), name: "Nominal behavior".into() },
        Place { id: P_EXT_BLOCKED.into(), name: "Blocked by external event".into() },
        Place { id: P_MECH_FAILED.into(), name: "Mechanically failed vehicles".into() },
    ];

    let mut activities = Vec::new();
    let mut provenance = BTreeMap::new();

    if rates.ext_arrival > 0.0 {
        activities.push(
            Activity::timed("ext_arrival", rates.ext_arrival)
                .input(
                    Guard::from(Condition::new(blocked, Cmp::Eq, 0)).and(Condition::new(nominal, Cmp::Ge, 1)),
                    vec![TokenOp::sub(nominal, 1)],
                )
                .case(Case::certain(vec![TokenOp::add(blocked, 1)])),
        );
        activities.push(
            Activity::timed("ext_clear", rates.ext_clear)
                .input(Condition::new(blocked, Cmp::Ge, 1), vec![TokenOp::sub(blocked, 1)])
                .case(Case::certain(vec![TokenOp::add(nominal, 1)])),
        );
        provenance.insert(
            "ext_arrival".into(),
            "pedestrian, vehicle or road infrastructure stops the convoy".into(),
        );
        provenance.insert("ext_clear".into(), "traffic lane clears; rate 1/external_mttr".into());
    }

    if rates.mech_fail > 0.0 {
        let vehicles = Expr::constant(f64::from(n));
        activities.push(
            Activity::timed("mech_fail", (vehicles - Expr::tokens(failed)) * Expr::constant(rates.mech_fail))
                .input(Condition::new(failed, Cmp::Lt, i64::from(n)), vec![])
                .case(Case::certain(vec![TokenOp::add(failed, 1)])),
        );
        let repair_rate = match profile.repair_policy {
            RepairPolicy::SingleCrew => Expr::constant(rates.mech_repair),
            RepairPolicy::PerVehicle => Expr::tokens(failed) * Expr::constant(rates.mech_repair),
        };
        activities.push(
            Activity::timed("mech_repair", repair_rate)
                .input(Condition::new(failed, Cmp::Ge, 1), vec![TokenOp::sub(failed, 1)])
                .case(Case::certain(vec![])),
        );
        provenance.insert(
            "mech_fail".into(),
            "one of the still-working vehicles suffers a mechanical failure".into(),
        );
        provenance.insert(
            "mech_repair".into(),
            match profile.repair_policy {
                RepairPolicy::SingleCrew => "single crew repairs one vehicle; rate 1/mech_mttr",
                RepairPolicy::PerVehicle => "each failed vehicle repaired independently; rate failed/mech_mttr",
            }
            .into(),
        );
    }

    let up_predicate = match profile.failure_criterion {
        FailureCriterion::AnyDisturbance => {
            Guard::from(Condition::new(blocked, Cmp::Eq, 0)).and(Condition::new(failed, Cmp::Eq, 0))
        }
        FailureCriterion::AllVehiclesFailed => Guard::from(Condition::new(failed, Cmp::Lt, i64::from(n))),
    };

    Ok(GeneratedSan {
        san: SanModel {
            places,
            activities,
            initial_marking: Marking::from(vec![1, 0, 0]),
        },
        up_predicate,
        provenance,
        rates,
        vehicle_count: n,
    })
}
