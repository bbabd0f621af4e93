//! Small reusable SAN fragments.

use super::expr::{Cmp, Condition, TokenOp};
use super::model::{Activity, Case, Marking, Place, PlaceId, SanModel};

/// Repairable single component: `nominal` (initially marked) and `failed`,
/// with exponential `fail` and `repair` activities.
pub fn two_state(fail_rate: f64, repair_rate: f64) -> SanModel {
    let nominal = PlaceId(0);
    let failed = PlaceId(1);
    SanModel {
        places: vec![
            Place { id: "nominal".into(), name: "Nominal".into() },
            Place { id: "failed".into(), name: "Failed".into() },
        ],
        activities: vec![
            Activity::timed("fail", fail_rate)
                .input(Condition::new(nominal, Cmp::Ge, 1), vec![TokenOp::sub(nominal, 1)])
                .case(Case::certain(vec![TokenOp::add(failed, 1)])),
            Activity::timed("repair", repair_rate)
                .input(Condition::new(failed, Cmp::Ge, 1), vec![TokenOp::sub(failed, 1)])
                .case(Case::certain(vec![TokenOp::add(nominal, 1)])),
        ],
        initial_marking: Marking::from(vec![1, 0]),
    }
}

/// Two-state SAN whose `repair` is omitted: the failed state absorbs.
pub fn single_failure(fail_rate: f64) -> SanModel {
    let mut san = two_state(fail_rate, 1.0);
    san.activities.truncate(1);
    san
}
