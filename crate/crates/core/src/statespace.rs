//! Reachability graphs of SANs and their Markov chains.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::san::{
    is_stable, stabilize_distribution, timed_outcomes, ActivityId, Marking, SanError, SanModel,
    Timing, DEFAULT_STABILIZATION_BOUND,
};

pub const DEFAULT_STATE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    /// Per hour.
    pub rate: f64,
    /// Contributing activities, joined with `+` when parallel firings merge.
    pub activity: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StateSpaceError {
    #[error("state space exceeds the limit of {limit} states")]
    StateLimitExceeded { limit: usize },
    #[error("initial marking does not stabilize to a single marking")]
    VanishingInitial,
    #[error("invalid state graph: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    San(#[from] SanError),
}

impl StateSpaceError {
    pub fn code(&self) -> &'static str {
        match self {
            StateSpaceError::StateLimitExceeded { .. } => "STATE_LIMIT_EXCEEDED",
            StateSpaceError::VanishingInitial => "VANISHING_INITIAL",
            StateSpaceError::InvalidGraph(_) => "INVALID_GRAPH",
            StateSpaceError::San(e) => e.code(),
        }
    }
}

/// Stable markings and the exponential transitions between them.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph {
    states: Vec<Marking>,
    transitions: Vec<Transition>,
    initial: usize,
}

impl StateGraph {
    pub fn new(states: Vec<Marking>, transitions: Vec<Transition>, initial: usize) -> Result<Self, StateSpaceError> {
        let n = states.len();
        if initial >= n {
            return Err(StateSpaceError::InvalidGraph(format!("initial index {initial} out of {n} states")));
        }
        for t in &transitions {
            if t.from >= n || t.to >= n {
                return Err(StateSpaceError::InvalidGraph(format!("transition {} -> {} out of range", t.from, t.to)));
            }
            if !(t.rate > 0.0 && t.rate.is_finite()) {
                return Err(StateSpaceError::InvalidGraph(format!("transition {} -> {} has rate {}", t.from, t.to, t.rate)));
            }
        }
        let distinct: std::collections::HashSet<&Marking> = states.iter().collect();
        if distinct.len() != n {
            return Err(StateSpaceError::InvalidGraph("duplicate states".into()));
        }
        Ok(Self { states, transitions, initial })
    }

    pub fn states(&self) -> &[Marking] {
        &self.states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn initial_index(&self) -> usize {
        self.initial
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Total rate of leaving each state (self-loops excluded).
    pub fn exit_rates(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.states.len()];
        for t in &self.transitions {
            if t.from != t.to {
                out[t.from] += t.rate;
            }
        }
        out
    }
}

/// Breadth-first exploration of the stable markings reachable from the
/// initial marking. States are numbered in first-visit order.
pub fn build_reachability(san: &SanModel, state_limit: usize) -> Result<StateGraph, StateSpaceError> {
    san.check_marking(&san.initial_marking)?;
    let initial = if is_stable(san, &san.initial_marking) {
        san.initial_marking.clone()
    } else {
        let start = std::iter::once((san.initial_marking.clone(), 1.0)).collect();
        let mut outcomes = stabilize_distribution(san, start, DEFAULT_STABILIZATION_BOUND)?;
        if outcomes.len() != 1 {
            return Err(StateSpaceError::VanishingInitial);
        }
        outcomes.pop().map(|(m, _)| m).ok_or(StateSpaceError::VanishingInitial)?
    };
    if state_limit < 1 {
        return Err(StateSpaceError::StateLimitExceeded { limit: state_limit });
    }

    let mut index: HashMap<Marking, usize> = HashMap::new();
    let mut states = vec![initial.clone()];
    index.insert(initial, 0);
    let mut queue = VecDeque::from([0usize]);
    let mut transitions = Vec::new();

    while let Some(from) = queue.pop_front() {
        let m = states[from].clone();
        // Targets in first-seen order with merged rates.
        let mut merged: Vec<(usize, f64, String)> = Vec::new();
        for (ai, a) in san.activities.iter().enumerate() {
            if a.is_instantaneous() || !a.is_enabled(&m) {
                continue;
            }
            let rate = match &a.timing {
                Timing::Exponential { rate } => rate.eval(&m),
                Timing::General { family } => {
                    return Err(SanError::NonExponential { activity: a.id.clone(), family: family.clone() }.into())
                }
                Timing::Instantaneous { .. } => unreachable!(),
            };
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(SanError::NonPositiveRate { activity: a.id.clone(), rate }.into());
            }
            for (target, p) in timed_outcomes(san, &m, ActivityId(ai), DEFAULT_STABILIZATION_BOUND)? {
                let to = match index.get(&target) {
                    Some(&i) => i,
                    None => {
                        if states.len() >= state_limit {
                            return Err(StateSpaceError::StateLimitExceeded { limit: state_limit });
                        }
                        let i = states.len();
                        index.insert(target.clone(), i);
                        states.push(target);
                        queue.push_back(i);
                        i
                    }
                };
                match merged.iter_mut().find(|(t, _, _)| *t == to) {
                    Some((_, r, label)) => {
                        *r += rate * p;
                        if !label.split('+').any(|l| l == a.id) {
                            label.push('+');
                            label.push_str(&a.id);
                        }
                    }
                    None => merged.push((to, rate * p, a.id.clone())),
                }
            }
        }
        transitions.extend(merged.into_iter().map(|(to, rate, activity)| Transition { from, to, rate, activity }));
    }

    StateGraph::new(states, transitions, 0)
}

/// A state graph with its states labelled up or down.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmcModel {
    graph: StateGraph,
    up: Vec<bool>,
}

impl CtmcModel {
    pub fn new(graph: StateGraph, up: Vec<bool>) -> Result<Self, StateSpaceError> {
        if up.len() != graph.len() {
            return Err(StateSpaceError::InvalidGraph(format!(
                "{} up labels for {} states",
                up.len(),
                graph.len()
            )));
        }
        Ok(Self { graph, up })
    }

    /// Chain over states `0..n` given as `(from, to, rate)` triples; states
    /// carry placeholder one-place markings.
    pub fn from_rates(
        n: usize,
        rates: &[(usize, usize, f64)],
        initial: usize,
        up_states: &[usize],
    ) -> Result<Self, StateSpaceError> {
        let states = (0..n).map(|i| Marking::from(vec![i as u32])).collect();
        let transitions = rates
            .iter()
            .map(|&(from, to, rate)| Transition { from, to, rate, activity: String::new() })
            .collect();
        let graph = StateGraph::new(states, transitions, initial)?;
        let mut up = vec![false; n];
        for &s in up_states {
            *up.get_mut(s)
                .ok_or_else(|| StateSpaceError::InvalidGraph(format!("up state {s} out of range")))? = true;
        }
        Self::new(graph, up)
    }

    pub fn graph(&self) -> &StateGraph {
        &self.graph
    }

    pub fn is_up(&self, state: usize) -> bool {
        self.up[state]
    }

    pub fn up_labels(&self) -> &[bool] {
        &self.up
    }

    pub fn up_states(&self) -> BTreeSet<usize> {
        self.up.iter().enumerate().filter(|(_, u)| **u).map(|(i, _)| i).collect()
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn initial_index(&self) -> usize {
        self.graph.initial
    }
}

pub fn to_ctmc(graph: StateGraph, up_predicate: impl Fn(&Marking) -> bool) -> CtmcModel {
    let up = graph.states.iter().map(&up_predicate).collect();
    CtmcModel { graph, up }
}

/// Sparse coordinate listing (1-based), self-loops omitted, followed by the
/// up-state list.
pub fn dump_ctmc(ctmc: &CtmcModel) -> String {
    let g = &ctmc.graph;
    let entries: Vec<&Transition> = g.transitions.iter().filter(|t| t.from != t.to).collect();
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "% initial {}", g.initial + 1);
    let _ = writeln!(out, "{} {} {}", g.len(), g.len(), entries.len());
    for t in entries {
        let _ = writeln!(out, "{} {} {}", t.from + 1, t.to + 1, t.rate);
    }
    let up: Vec<String> = ctmc.up_states().iter().map(|s| (s + 1).to_string()).collect();
    let _ = writeln!(out, "% up {}", up.join(" "));
    out
}
