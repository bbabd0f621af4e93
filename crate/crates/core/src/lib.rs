//! Dependability evaluation of vehicle platoons.
//!
//! A platoon organization ([`metamodel`]) is compiled into a stochastic
//! activity network ([`san`], [`generation`]), whose availability and mean
//! time to failure are computed exactly on the underlying Markov chain
//! ([`statespace`], [`analytic`]) or estimated by Monte Carlo
//! ([`simulation`]). [`measures`] ties both backends behind a common
//! evaluator registry and [`pipeline`] drives scenarios and sweeps.

pub mod metamodel;
pub mod san;
pub mod generation;
pub mod statespace;
pub mod validation;
pub mod analytic;
pub mod simulation;
pub mod measures;
pub mod scenario;
pub mod pipeline;
