//! Enabling, case resolution and firing with stabilization.

use std::collections::BTreeMap;

use rand::Rng;

use super::expr::TokenOp;
use super::model::{
    Activity, ActivityId, Marking, SanError, SanModel, Timing, CASE_SUM_TOLERANCE,
    DEFAULT_STABILIZATION_BOUND,
};

/// Resolves a probabilistic choice among alternatives with the given
/// non-negative weights (not necessarily normalized).
pub trait Chooser {
    fn choose(&mut self, weights: &[f64]) -> usize;
}

/// Always takes the first alternative with positive weight.
#[derive(Debug, Clone, Copy, Default)]
pub struct FirstChoice;

impl Chooser for FirstChoice {
    fn choose(&mut self, weights: &[f64]) -> usize {
        weights.iter().position(|w| *w > 0.0).unwrap_or(0)
    }
}

/// Samples an alternative proportionally to its weight.
pub struct Sampled<'a, R: ?Sized>(pub &'a mut R);

impl<R: Rng + ?Sized> Chooser for Sampled<'_, R> {
    fn choose(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.0.random::<f64>() * total;
        let mut last = 0;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                if u < *w {
                    return i;
                }
                u -= w;
                last = i;
            }
        }
        last
    }
}

/// Activities enabled at `m`. When any instantaneous activity is enabled only
/// instantaneous activities are returned.
pub fn enabled_activities(model: &SanModel, m: &Marking) -> Result<Vec<ActivityId>, SanError> {
    model.check_marking(m)?;
    let enabled = |inst: bool| -> Vec<ActivityId> {
        model
            .activities
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_instantaneous() == inst && a.is_enabled(m))
            .map(|(i, _)| ActivityId(i))
            .collect()
    };
    let instantaneous = enabled(true);
    if !instantaneous.is_empty() {
        return Ok(instantaneous);
    }
    Ok(enabled(false))
}

pub(crate) fn is_stable(model: &SanModel, m: &Marking) -> bool {
    !model
        .activities
        .iter()
        .any(|a| a.is_instantaneous() && a.is_enabled(m))
}

/// Fire a timed activity at a stable marking and stabilize the result,
/// resolving every probabilistic choice with `chooser`.
pub fn fire_and_stabilize(
    model: &SanModel,
    m: &Marking,
    timed_activity: ActivityId,
    chooser: &mut dyn Chooser,
) -> Result<Marking, SanError> {
    fire_and_stabilize_bounded(model, m, timed_activity, chooser, DEFAULT_STABILIZATION_BOUND)
}

pub fn fire_and_stabilize_bounded(
    model: &SanModel,
    m: &Marking,
    timed_activity: ActivityId,
    chooser: &mut dyn Chooser,
    bound: usize,
) -> Result<Marking, SanError> {
    model.check_marking(m)?;
    let activity = model
        .activities
        .get(timed_activity.0)
        .ok_or_else(|| SanError::UnknownActivity(format!("#{}", timed_activity.0)))?;
    if activity.is_instantaneous() || !activity.is_enabled(m) || !is_stable(model, m) {
        return Err(SanError::NotEnabled(activity.id.clone()));
    }
    let mut next = m.clone();
    fire_in_place(model, &mut next, timed_activity, chooser, bound)?;
    Ok(next)
}

/// Unchecked firing used by the simulator: `act` must be enabled at `m`.
pub(crate) fn fire_in_place(
    model: &SanModel,
    m: &mut Marking,
    act: ActivityId,
    chooser: &mut dyn Chooser,
    bound: usize,
) -> Result<(), SanError> {
    fire_one(model.activity(act), m, chooser)?;
    stabilize_in_place(model, m, chooser, bound)
}

fn fire_one(a: &Activity, m: &mut Marking, chooser: &mut dyn Chooser) -> Result<(), SanError> {
    let case = match a.cases.len() {
        0 => return Err(SanError::Caseless(a.id.clone())),
        1 => {
            let p = a.cases[0].probability.eval(m);
            if (p - 1.0).abs() > CASE_SUM_TOLERANCE {
                return Err(SanError::CaseProbabilitySum {
                    activity: a.id.clone(),
                    sum: p,
                });
            }
            0
        }
        _ => {
            let probs = case_probabilities(a, m)?;
            chooser.choose(&probs)
        }
    };
    for g in &a.input_gates {
        apply_ops(a, &g.function, m)?;
    }
    apply_ops(a, &a.cases[case].gate.ops, m)
}

pub(crate) fn stabilize_in_place(
    model: &SanModel,
    m: &mut Marking,
    chooser: &mut dyn Chooser,
    bound: usize,
) -> Result<(), SanError> {
    let mut firings = 0usize;
    loop {
        let enabled: Vec<(usize, f64)> = model
            .activities
            .iter()
            .enumerate()
            .filter_map(|(i, a)| match a.timing {
                Timing::Instantaneous { weight } if a.is_enabled(m) => Some((i, weight)),
                _ => None,
            })
            .collect();
        if enabled.is_empty() {
            return Ok(());
        }
        firings += 1;
        if firings > bound {
            return Err(SanError::Unstable { bound });
        }
        let pick = if enabled.len() == 1 {
            0
        } else {
            let weights: Vec<f64> = enabled.iter().map(|(_, w)| *w).collect();
            chooser.choose(&weights)
        };
        fire_one(&model.activities[enabled[pick].0], m, chooser)?;
    }
}

pub(crate) fn case_probabilities(a: &Activity, m: &Marking) -> Result<Vec<f64>, SanError> {
    if a.cases.is_empty() {
        return Err(SanError::Caseless(a.id.clone()));
    }
    let probs: Vec<f64> = a.cases.iter().map(|c| c.probability.eval(m)).collect();
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > CASE_SUM_TOLERANCE || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(SanError::CaseProbabilitySum {
            activity: a.id.clone(),
            sum,
        });
    }
    Ok(probs)
}

fn apply_ops(a: &Activity, ops: &[TokenOp], m: &mut Marking) -> Result<(), SanError> {
    for op in ops {
        if !op.apply(m) {
            return Err(SanError::TokenRange {
                activity: a.id.clone(),
                place: format!("#{}", op.place.0),
            });
        }
    }
    Ok(())
}

fn apply_case(a: &Activity, case: usize, m: &Marking) -> Result<Marking, SanError> {
    let mut next = m.clone();
    for g in &a.input_gates {
        apply_ops(a, &g.function, &mut next)?;
    }
    apply_ops(a, &a.cases[case].gate.ops, &mut next)?;
    Ok(next)
}

/// Every stable marking reachable by firing `act` at `m`, with its
/// probability. Case and instantaneous-activity branching is enumerated
/// exhaustively.
pub fn timed_outcomes(
    model: &SanModel,
    m: &Marking,
    act: ActivityId,
    bound: usize,
) -> Result<Vec<(Marking, f64)>, SanError> {
    let a = model.activity(act);
    let probs = case_probabilities(a, m)?;
    let mut frontier: BTreeMap<Marking, f64> = BTreeMap::new();
    for (case, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            *frontier.entry(apply_case(a, case, m)?).or_default() += p;
        }
    }
    stabilize_distribution(model, frontier, bound)
}

/// Push a distribution over (possibly vanishing) markings through
/// instantaneous firings until all of its mass sits on stable markings.
pub(crate) fn stabilize_distribution(
    model: &SanModel,
    mut frontier: BTreeMap<Marking, f64>,
    bound: usize,
) -> Result<Vec<(Marking, f64)>, SanError> {
    let mut stable: BTreeMap<Marking, f64> = BTreeMap::new();
    let mut depth = 0usize;
    while !frontier.is_empty() {
        let mut next: BTreeMap<Marking, f64> = BTreeMap::new();
        for (mk, mass) in frontier {
            let enabled: Vec<(usize, f64)> = model
                .activities
                .iter()
                .enumerate()
                .filter_map(|(i, a)| match a.timing {
                    Timing::Instantaneous { weight } if a.is_enabled(&mk) => Some((i, weight)),
                    _ => None,
                })
                .collect();
            if enabled.is_empty() {
                *stable.entry(mk).or_default() += mass;
                continue;
            }
            let total: f64 = enabled.iter().map(|(_, w)| w).sum();
            for (i, w) in enabled {
                let a = &model.activities[i];
                let probs = case_probabilities(a, &mk)?;
                for (case, p) in probs.iter().enumerate() {
                    if *p > 0.0 {
                        *next.entry(apply_case(a, case, &mk)?).or_default() += mass * w / total * p;
                    }
                }
            }
        }
        if !next.is_empty() {
            depth += 1;
            if depth > bound {
                return Err(SanError::Unstable { bound });
            }
        }
        frontier = next;
    }
    Ok(stable.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::san::expr::{Cmp, Condition};
    use crate::san::model::{Case, Place, PlaceId};
    use crate::san::patterns::two_state;

    #[test]
    fn enabling_follows_predicates() {
        let san = two_state(1.0, 1.0);
        let up = san.marking(&[("nominal", 1)]).unwrap();
        let down = san.marking(&[("failed", 1)]).unwrap();
        let ids = |v: Vec<ActivityId>| -> Vec<String> {
            v.into_iter().map(|a| san.activity(a).id.clone()).collect()
        };
        assert_eq!(ids(enabled_activities(&san, &up).unwrap()), vec!["fail"]);
        assert_eq!(ids(enabled_activities(&san, &down).unwrap()), vec!["repair"]);
        assert!(matches!(
            enabled_activities(&san, &Marking::from(vec![1])),
            Err(SanError::InvalidMarking { .. })
        ));
        assert!(san.marking(&[("bogus", 1)]).is_err());
    }

    fn with_instantaneous() -> SanModel {
        let a = PlaceId(0);
        let b = PlaceId(1);
        SanModel {
            places: vec![
                Place { id: "a".into(), name: "a".into() },
                Place { id: "b".into(), name: "b".into() },
            ],
            activities: vec![
                Activity::timed("t", 1.0)
                    .input(Condition::new(a, Cmp::Ge, 1), vec![TokenOp::sub(a, 1)])
                    .case(Case::certain(vec![TokenOp::add(b, 1)])),
                Activity::instantaneous("i", 1.0)
                    .input(Condition::new(b, Cmp::Ge, 1), vec![TokenOp::sub(b, 1)])
                    .case(Case::certain(vec![TokenOp::add(a, 1)])),
            ],
            initial_marking: Marking::from(vec![1, 0]),
        }
    }

    #[test]
    fn instantaneous_priority() {
        let san = with_instantaneous();
        let vanishing = Marking::from(vec![1, 1]);
        assert_eq!(enabled_activities(&san, &vanishing).unwrap(), vec![ActivityId(1)]);
        let err = fire_and_stabilize(&san, &vanishing, ActivityId(0), &mut FirstChoice);
        assert!(matches!(err, Err(SanError::NotEnabled(_))));
    }

    #[test]
    fn stabilization_returns_token() {
        let san = with_instantaneous();
        let m = san.initial_marking.clone();
        let next = fire_and_stabilize(&san, &m, ActivityId(0), &mut FirstChoice).unwrap();
        assert_eq!(next, m);
        let outcomes = timed_outcomes(&san, &m, ActivityId(0), 10).unwrap();
        assert_eq!(outcomes, vec![(m, 1.0)]);
    }

    #[test]
    fn fire_moves_token() {
        let san = two_state(1.0, 1.0);
        let up = san.initial_marking.clone();
        let fail = san.activity_id("fail").unwrap();
        let next = fire_and_stabilize(&san, &up, fail, &mut FirstChoice).unwrap();
        assert_eq!(next, san.marking(&[("failed", 1)]).unwrap());
        let repair = san.activity_id("repair").unwrap();
        assert!(matches!(
            fire_and_stabilize(&san, &up, repair, &mut FirstChoice),
            Err(SanError::NotEnabled(_))
        ));
    }

    #[test]
    fn identity_case_only_applies_inputs() {
        let p = PlaceId(0);
        let san = SanModel {
            places: vec![Place { id: "p".into(), name: "p".into() }],
            activities: vec![Activity::timed("drain", 1.0)
                .input(Condition::new(p, Cmp::Ge, 1), vec![TokenOp::sub(p, 1)])
                .case(Case::certain(vec![]))],
            initial_marking: Marking::from(vec![3]),
        };
        let next =
            fire_and_stabilize(&san, &san.initial_marking, ActivityId(0), &mut FirstChoice).unwrap();
        assert_eq!(next.as_slice(), &[2]);
    }

    #[test]
    fn instantaneous_self_loop_is_unstable() {
        let p = PlaceId(0);
        let san = SanModel {
            places: vec![Place { id: "p".into(), name: "p".into() }],
            activities: vec![
                Activity::timed("t", 1.0).case(Case::certain(vec![TokenOp::add(p, 1)])),
                Activity::instantaneous("loop", 1.0)
                    .input(Condition::new(p, Cmp::Ge, 1), vec![TokenOp::sub(p, 1)])
                    .case(Case::certain(vec![TokenOp::add(p, 1)])),
            ],
            initial_marking: Marking::from(vec![0]),
        };
        let m = san.initial_marking.clone();
        assert!(matches!(
            fire_and_stabilize(&san, &m, ActivityId(0), &mut FirstChoice),
            Err(SanError::Unstable { bound: 10_000 })
        ));
        assert!(matches!(
            timed_outcomes(&san, &m, ActivityId(0), 50),
            Err(SanError::Unstable { bound: 50 })
        ));
    }

    #[test]
    fn probabilistic_cases_enumerate() {
        let p = PlaceId(0);
        let q = PlaceId(1);
        let san = SanModel {
            places: vec![
                Place { id: "p".into(), name: "p".into() },
                Place { id: "q".into(), name: "q".into() },
            ],
            activities: vec![Activity::timed("t", 2.0)
                .case(Case::new(0.25, vec![TokenOp::add(p, 1)]))
                .case(Case::new(0.75, vec![TokenOp::add(q, 1)]))],
            initial_marking: Marking::from(vec![0, 0]),
        };
        let out = timed_outcomes(&san, &san.initial_marking, ActivityId(0), 10).unwrap();
        assert_eq!(
            out,
            vec![(Marking::from(vec![0, 1]), 0.75), (Marking::from(vec![1, 0]), 0.25)]
        );
    }

    #[test]
    fn sampled_choice_respects_weights() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut chooser = Sampled(&mut rng);
        let mut hits = [0usize; 3];
        for _ in 0..20_000 {
            hits[chooser.choose(&[1.0, 0.0, 3.0])] += 1;
        }
        assert_eq!(hits[1], 0);
        let frac = hits[2] as f64 / 20_000.0;
        assert!((frac - 0.75).abs() < 0.02, "{frac}");
    }
}
