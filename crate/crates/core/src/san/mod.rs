//! Stochastic activity networks: markings, gates, cases and firing.

mod dump;
mod expr;
mod firing;
mod model;
pub mod patterns;

pub use dump::{dump_san, SanDump};
pub use expr::{Cmp, Condition, Expr, Guard, OpKind, TokenOp};
pub(crate) use firing::{fire_in_place, is_stable, stabilize_distribution, stabilize_in_place};
pub use firing::{
    enabled_activities, fire_and_stabilize, fire_and_stabilize_bounded, timed_outcomes, Chooser,
    FirstChoice, Sampled,
};
pub use model::{
    validate_san, Activity, ActivityId, Case, InputGate, Marking, OutputGate, Place, PlaceId,
    SanError, SanModel, SanReport, SanViolation, Timing, CASE_SUM_TOLERANCE,
    DEFAULT_STABILIZATION_BOUND,
};
