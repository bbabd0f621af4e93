//! Next-event Monte Carlo simulation of SANs with replication estimates.

mod rng;

use std::ops::ControlFlow;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub use rng::{exponential, replication_stream, ReplicationRng};

use crate::measures::{MeasureKind, MeasureSpec};
use crate::san::{
    fire_in_place, is_stable, stabilize_in_place, timed_outcomes, ActivityId, Guard, Marking, SanError, SanModel,
    Sampled, Timing, DEFAULT_STABILIZATION_BOUND,
};

pub const DEFAULT_REPLICATIONS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
/// Horizon used when none is configured and no failure rate is available.
pub const DEFAULT_HORIZON: f64 = 1000.0;
/// MTTF runs are censored at this many mean times of the slowest failure.
pub const MTTF_HORIZON_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub replications: usize,
    /// Hours. `None` picks a measure-specific default.
    pub horizon: Option<f64>,
    pub seed: u64,
    pub confidence_level: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            replications: DEFAULT_REPLICATIONS,
            horizon: None,
            seed: DEFAULT_SEED,
            confidence_level: DEFAULT_CONFIDENCE,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<(), SimError> {
        if self.replications < 1 {
            return Err(SimError::InvalidConfig("replications must be >= 1".into()));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(SimError::InvalidConfig(format!("horizon {h} must be finite and > 0")));
            }
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(SimError::InvalidConfig(format!(
                "confidence_level {} must be in (0, 1)",
                self.confidence_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub ci_half_width: f64,
    pub replications: usize,
    pub method: &'static str,
    /// MTTF replications that did not fail before the horizon; they count as
    /// the horizon, so a censored estimate is a lower bound.
    pub censored: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("measure not supported by simulation: {0}")]
    UnsupportedMeasure(String),
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    San(#[from] SanError),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::UnsupportedMeasure(_) => "UNSUPPORTED_MEASURE",
            SimError::InvalidConfig(_) => "INVALID_CONFIG",
            SimError::San(e) => e.code(),
        }
    }
}

/// Marking held over `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub marking: Marking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub intervals: Vec<Interval>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.intervals.iter().map(|i| i.end - i.start).sum()
    }

    /// Marking in effect at time `t`.
    pub fn marking_at(&self, t: f64) -> Option<&Marking> {
        self.intervals
            .iter()
            .find(|i| i.start <= t && t < i.end)
            .or_else(|| self.intervals.last().filter(|i| i.end == t))
            .map(|i| &i.marking)
    }
}

/// Drive one trajectory over `[0, horizon]`, handing each holding interval
/// to `visit` until it breaks or the horizon is reached.
fn run_trajectory<F>(san: &SanModel, horizon: f64, rng: &mut ReplicationRng, mut visit: F) -> Result<(), SimError>
where
    F: FnMut(f64, f64, &Marking) -> ControlFlow<()>,
{
    san.check_marking(&san.initial_marking)?;
    let mut m = san.initial_marking.clone();
    if !is_stable(san, &m) {
        stabilize_in_place(san, &mut m, &mut Sampled(&mut *rng), DEFAULT_STABILIZATION_BOUND)?;
    }
    let mut now = 0.0;
    loop {
        let mut winner: Option<(usize, f64)> = None;
        for (i, a) in san.activities.iter().enumerate() {
            if a.is_instantaneous() || !a.is_enabled(&m) {
                continue;
            }
            let rate = match &a.timing {
                Timing::Exponential { rate } => rate.eval(&m),
                Timing::General { family } => {
                    return Err(SanError::NonExponential { activity: a.id.clone(), family: family.clone() }.into())
                }
                Timing::Instantaneous { .. } => continue,
            };
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(SanError::NonPositiveRate { activity: a.id.clone(), rate }.into());
            }
            let delay = exponential(rng, rate);
            if winner.is_none_or(|(_, d)| delay < d) {
                winner = Some((i, delay));
            }
        }
        let Some((act, delay)) = winner else {
            let _ = visit(now, horizon, &m);
            return Ok(());
        };
        let next = now + delay;
        if next >= horizon {
            let _ = visit(now, horizon, &m);
            return Ok(());
        }
        if visit(now, next, &m).is_break() {
            return Ok(());
        }
        fire_in_place(san, &mut m, ActivityId(act), &mut Sampled(&mut *rng), DEFAULT_STABILIZATION_BOUND)?;
        now = next;
    }
}

/// Sample one trajectory covering `[0, horizon]`.
pub fn simulate_replication(
    san: &SanModel,
    horizon: f64,
    rng: &mut ReplicationRng,
) -> Result<Trajectory, SimError> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(SimError::InvalidConfig(format!("horizon {horizon} must be finite and >= 0")));
    }
    let mut intervals = Vec::new();
    run_trajectory(san, horizon, rng, |start, end, m| {
        intervals.push(Interval { start, end, marking: m.clone() });
        ControlFlow::Continue(())
    })?;
    Ok(Trajectory { intervals })
}

/// Smallest rate, at the initial marking, of a timed activity that can take
/// the model out of the up set.
pub fn min_failure_rate(san: &SanModel, up: &Guard) -> Option<f64> {
    let m = &san.initial_marking;
    san.activities
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.is_instantaneous() && a.is_enabled(m))
        .filter_map(|(i, a)| {
            let rate = a.rate(m)?;
            let outcomes = timed_outcomes(san, m, ActivityId(i), DEFAULT_STABILIZATION_BOUND).ok()?;
            let p_down: f64 = outcomes.iter().filter(|(mk, _)| !up.holds(mk)).map(|(_, p)| p).sum();
            (p_down > 0.0).then_some(rate * p_down)
        })
        .filter(|r| *r > 0.0)
        .reduce(f64::min)
}

/// Horizon actually simulated for `kind` under `cfg`.
pub fn resolve_horizon(san: &SanModel, up: &Guard, kind: &MeasureKind, cfg: &SimConfig) -> f64 {
    match kind {
        MeasureKind::InstantOfTime { t } => *t,
        MeasureKind::IntervalAverage { horizon } => *horizon,
        MeasureKind::Mttf => cfg.horizon.unwrap_or_else(|| {
            min_failure_rate(san, up).map_or(DEFAULT_HORIZON, |r| MTTF_HORIZON_FACTOR / r)
        }),
        MeasureKind::SteadyState => cfg.horizon.unwrap_or(DEFAULT_HORIZON),
    }
}

/// Replicated estimate of `spec` with a normal-approximation confidence
/// interval. Replication `i` uses stream `i` of `cfg.seed`.
pub fn estimate_measure(
    san: &SanModel,
    up: &Guard,
    spec: &MeasureSpec,
    cfg: &SimConfig,
) -> Result<Estimate, SimError> {
    cfg.check()?;
    if let MeasureKind::SteadyState = spec.kind {
        return Err(SimError::UnsupportedMeasure(
            "steady state; use an interval average over a long horizon".into(),
        ));
    }
    spec.kind.check().map_err(SimError::InvalidConfig)?;
    let horizon = resolve_horizon(san, up, &spec.kind, cfg);
    let reward = &spec.variable.reward;

    let observations: Vec<(f64, bool)> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_stream(cfg.seed, i);
            match spec.kind {
                MeasureKind::InstantOfTime { .. } => {
                    let mut last = 0.0;
                    run_trajectory(san, horizon, &mut rng, |_, _, m| {
                        last = reward.eval(m, up);
                        ControlFlow::Continue(())
                    })?;
                    Ok((last, false))
                }
                MeasureKind::IntervalAverage { .. } => {
                    let mut area = 0.0;
                    let mut first = None;
                    run_trajectory(san, horizon, &mut rng, |start, end, m| {
                        let r = reward.eval(m, up);
                        first.get_or_insert(r);
                        area += r * (end - start);
                        ControlFlow::Continue(())
                    })?;
                    let value = if horizon > 0.0 { area / horizon } else { first.unwrap_or(0.0) };
                    Ok((value, false))
                }
                MeasureKind::Mttf => {
                    let mut failed_at = None;
                    run_trajectory(san, horizon, &mut rng, |start, _, m| {
                        if up.holds(m) {
                            ControlFlow::Continue(())
                        } else {
                            failed_at = Some(start);
                            ControlFlow::Break(())
                        }
                    })?;
                    Ok(failed_at.map_or((horizon, true), |t| (t, false)))
                }
                MeasureKind::SteadyState => unreachable!(),
            }
        })
        .collect::<Result<_, SimError>>()?;

    let values: Vec<f64> = observations.iter().map(|(v, _)| *v).collect();
    let censored = observations.iter().filter(|(_, c)| *c).count();
    let (mean, half) = mean_and_half_width(&values, cfg.confidence_level);
    Ok(Estimate {
        mean,
        ci_half_width: half,
        replications: cfg.replications,
        method: "simulation",
        censored,
        horizon,
    })
}

/// Pairwise summation so the total does not depend on accumulation order
/// beyond the fixed split.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean and the half-width `z·s/√n` of its confidence interval.
/// A single observation yields half-width 0.
pub fn mean_and_half_width(values: &[f64], confidence_level: f64) -> (f64, f64) {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let variance = pairwise_sum(&squares) / (n - 1) as f64;
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - (1.0 - confidence_level) / 2.0);
    (mean, z * (variance / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::RewardVariable;
    use crate::san::patterns::{single_failure, two_state};
    use crate::san::{Cmp, Condition, Place, PlaceId};

    fn nominal_up() -> Guard {
        Guard::from(Condition::new(PlaceId(0), Cmp::Ge, 1))
    }

    #[test]
    fn deadlock_holds_initial_marking() {
        let san = SanModel {
            places: vec![Place { id: "p".into(), name: "p".into() }],
            activities: vec![],
            initial_marking: Marking::from(vec![1]),
        };
        let tr = simulate_replication(&san, 5.0, &mut replication_stream(1, 0)).unwrap();
        assert_eq!(tr.intervals, vec![Interval { start: 0.0, end: 5.0, marking: Marking::from(vec![1]) }]);
    }

    #[test]
    fn trajectories_cover_horizon_and_repeat() {
        let san = two_state(1.0, 1.0);
        let a = simulate_replication(&san, 50.0, &mut replication_stream(9, 2)).unwrap();
        let b = simulate_replication(&san, 50.0, &mut replication_stream(9, 2)).unwrap();
        assert_eq!(a, b);
        assert!((a.duration() - 50.0).abs() < 1e-9);
        assert_eq!(a.intervals[0].start, 0.0);
        assert_eq!(a.intervals.last().unwrap().end, 50.0);
        for w in a.intervals.windows(2) {
            assert_eq!(w[0].end, w[1].start);
            assert!(w[0].start <= w[0].end);
        }
        assert_eq!(a.marking_at(0.0), Some(&san.initial_marking));
        assert!(a.marking_at(50.0).is_some());
    }

    #[test]
    fn long_run_fraction_up() {
        let san = two_state(1.0, 1.0);
        let mut fractions = Vec::new();
        for i in 0..100 {
            let tr = simulate_replication(&san, 1e4, &mut replication_stream(5, i)).unwrap();
            let up: f64 = tr
                .intervals
                .iter()
                .filter(|iv| iv.marking.as_slice()[0] == 1)
                .map(|iv| iv.end - iv.start)
                .sum();
            fractions.push(up / 1e4);
        }
        let mean = fractions.iter().sum::<f64>() / 100.0;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn instant_at_zero_is_certain() {
        let spec = MeasureSpec::new(RewardVariable::availability(), MeasureKind::InstantOfTime { t: 0.0 });
        let cfg = SimConfig { replications: 100, ..SimConfig::default() };
        let est = estimate_measure(&two_state(1.0, 1.0), &nominal_up(), &spec, &cfg).unwrap();
        assert_eq!((est.mean, est.ci_half_width), (1.0, 0.0));
    }

    #[test]
    fn mttf_of_single_failure() {
        let spec = MeasureSpec::new(RewardVariable::availability(), MeasureKind::Mttf);
        let cfg = SimConfig { replications: 20_000, ..SimConfig::default() };
        let san = single_failure(2.0);
        let est = estimate_measure(&san, &nominal_up(), &spec, &cfg).unwrap();
        assert_eq!(est.horizon, 50.0);
        assert_eq!(est.censored, 0);
        assert!((est.mean - 0.5).abs() <= 3.0 * est.ci_half_width, "{est:?}");
    }

    #[test]
    fn mttf_censoring_is_flagged() {
        let spec = MeasureSpec::new(RewardVariable::availability(), MeasureKind::Mttf);
        let cfg = SimConfig { replications: 1000, horizon: Some(0.1), ..SimConfig::default() };
        let est = estimate_measure(&single_failure(2.0), &nominal_up(), &spec, &cfg).unwrap();
        assert!(est.censored > 0);
        assert!(est.mean <= 0.1);
    }

    #[test]
    fn steady_state_is_rejected() {
        let spec = MeasureSpec::new(RewardVariable::availability(), MeasureKind::SteadyState);
        let err = estimate_measure(&two_state(1.0, 1.0), &nominal_up(), &spec, &SimConfig::default()).unwrap_err();
        assert_eq!(err.code(), "UNSUPPORTED_MEASURE");
    }

    #[test]
    fn estimates_are_reproducible() {
        let spec = MeasureSpec::new(RewardVariable::availability(), MeasureKind::IntervalAverage { horizon: 10.0 });
        let cfg = SimConfig { replications: 500, seed: 3, ..SimConfig::default() };
        let a = estimate_measure(&two_state(1.0, 2.0), &nominal_up(), &spec, &cfg).unwrap();
        let b = estimate_measure(&two_state(1.0, 2.0), &nominal_up(), &spec, &cfg).unwrap();
        assert_eq!(a, b);
        let c = estimate_measure(&two_state(1.0, 2.0), &nominal_up(), &spec, &SimConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn half_width_formula() {
        let (mean, half) = mean_and_half_width(&[1.0, 0.0, 1.0, 0.0], 0.95);
        assert_eq!(mean, 0.5);
        // s = sqrt(1/3), z = 1.959963984540054
        let expected = 1.959963984540054 * (1.0f64 / 3.0 / 4.0).sqrt();
        assert!((half - expected).abs() < 1e-12);
        assert_eq!(mean_and_half_width(&[0.7], 0.95), (0.7, 0.0));
    }

    #[test]
    fn bad_config() {
        let spec = MeasureSpec::new(RewardVariable::availability(), MeasureKind::InstantOfTime { t: 1.0 });
        for cfg in [
            SimConfig { replications: 0, ..SimConfig::default() },
            SimConfig { confidence_level: 1.0, ..SimConfig::default() },
            SimConfig { horizon: Some(-1.0), ..SimConfig::default() },
        ] {
            assert!(estimate_measure(&two_state(1.0, 1.0), &nominal_up(), &spec, &cfg).is_err());
        }
    }
}
