//! Exact CTMC solution: steady state, transient distributions by
//! uniformization, interval-averaged distributions and mean time to failure.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::statespace::CtmcModel;

/// Bound on the steady-state balance residual `max |(πQ)_j|`.
pub const STEADY_STATE_RESIDUAL: f64 = 1e-10;

pub const DEFAULT_TRANSIENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalyticError {
    #[error("chain is reducible: {0}")]
    ReducibleChain(String),
    #[error("down states are unreachable from the initial state (MTTF is infinite)")]
    NoFailurePath,
    #[error("linear system is singular")]
    Singular,
    #[error("steady-state residual {residual:e} exceeds {bound:e}")]
    Inaccurate { residual: f64, bound: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl AnalyticError {
    pub fn code(&self) -> &'static str {
        match self {
            AnalyticError::ReducibleChain(_) => "REDUCIBLE_CHAIN",
            AnalyticError::NoFailurePath => "NO_FAILURE_PATH",
            AnalyticError::Singular => "SINGULAR_SYSTEM",
            AnalyticError::Inaccurate { .. } => "INACCURATE",
            AnalyticError::InvalidArgument(_) => "INVALID_ARGUMENT",
        }
    }
}

/// Probability vector over the states of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn point_mass(n: usize, state: usize) -> Self {
        let mut p = vec![0.0; n];
        p[state] = 1.0;
        Distribution(p)
    }

    pub fn from_vec(p: Vec<f64>) -> Self {
        Distribution(p)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Probability mass on the states flagged in `mask`.
    pub fn mass_where(&self, mask: &[bool]) -> f64 {
        self.0.iter().zip(mask).filter(|(_, m)| **m).map(|(p, _)| p).sum()
    }

    pub fn up_probability(&self, ctmc: &CtmcModel) -> f64 {
        self.mass_where(ctmc.up_labels())
    }

    /// `Σ_s reward(s)·p(s)`.
    pub fn expectation(&self, reward: impl Fn(usize) -> f64) -> f64 {
        self.0.iter().enumerate().map(|(i, p)| p * reward(i)).sum()
    }
}

fn successors(ctmc: &CtmcModel) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); ctmc.len()];
    for t in ctmc.graph().transitions() {
        if t.from != t.to {
            adj[t.from].push(t.to);
        }
    }
    adj
}

fn reach(adj: &[Vec<usize>], start: usize, allowed: impl Fn(usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(s) = stack.pop() {
        for &t in &adj[s] {
            if !seen[t] && allowed(t) {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

fn check_irreducible(ctmc: &CtmcModel) -> Result<(), AnalyticError> {
    let n = ctmc.len();
    let adj = successors(ctmc);
    let exits = ctmc.graph().exit_rates();
    if n > 1 {
        if let Some(s) = exits.iter().position(|r| *r == 0.0) {
            return Err(AnalyticError::ReducibleChain(format!("state {s} is absorbing")));
        }
    }
    let init = ctmc.initial_index();
    let forward = reach(&adj, init, |_| true);
    let mut reverse = vec![Vec::new(); n];
    for (s, targets) in adj.iter().enumerate() {
        for &t in targets {
            reverse[t].push(s);
        }
    }
    let backward = reach(&reverse, init, |_| true);
    match (0..n).find(|&s| !forward[s] || !backward[s]) {
        Some(s) => Err(AnalyticError::ReducibleChain(format!(
            "state {s} is not mutually reachable with the initial state"
        ))),
        None => Ok(()),
    }
}

/// `max_j |(πQ)_j|`.
pub fn balance_residual(ctmc: &CtmcModel, pi: &Distribution) -> f64 {
    let p = pi.probabilities();
    let mut flow = vec![0.0; ctmc.len()];
    for t in ctmc.graph().transitions() {
        if t.from != t.to {
            flow[t.to] += p[t.from] * t.rate;
            flow[t.from] -= p[t.from] * t.rate;
        }
    }
    flow.iter().fold(0.0, |m, f| m.max(f.abs()))
}

/// Stationary distribution from the global balance equations, with the
/// normalization condition replacing the last balance equation.
pub fn steady_state(ctmc: &CtmcModel) -> Result<Distribution, AnalyticError> {
    check_irreducible(ctmc)?;
    let n = ctmc.len();
    // Rows of Q^T are balance equations.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for t in ctmc.graph().transitions() {
        if t.from != t.to {
            a[(t.to, t.from)] += t.rate;
            a[(t.from, t.from)] -= t.rate;
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;

    let lu = a.clone().lu();
    let mut x = lu.solve(&b).ok_or(AnalyticError::Singular)?;
    // One step of iterative refinement.
    let r = &b - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }

    let mut p: Vec<f64> = x.iter().map(|v| if *v < 0.0 && *v > -1e-14 { 0.0 } else { *v }).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    let pi = Distribution(p);
    let residual = balance_residual(ctmc, &pi);
    if residual > STEADY_STATE_RESIDUAL || pi.0.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(AnalyticError::Inaccurate { residual, bound: STEADY_STATE_RESIDUAL });
    }
    Ok(pi)
}

/// Uniformized chain `P = I + Q/Λ` applied to row vectors.
struct Uniformized<'a> {
    ctmc: &'a CtmcModel,
    lambda: f64,
    stay: Vec<f64>,
}

impl<'a> Uniformized<'a> {
    fn new(ctmc: &'a CtmcModel) -> Self {
        let exits = ctmc.graph().exit_rates();
        let lambda = exits.iter().cloned().fold(0.0, f64::max);
        let stay = exits.iter().map(|e| if lambda > 0.0 { 1.0 - e / lambda } else { 1.0 }).collect();
        Self { ctmc, lambda, stay }
    }

    fn step(&self, v: &[f64], out: &mut [f64]) {
        for (o, (x, s)) in out.iter_mut().zip(v.iter().zip(&self.stay)) {
            *o = x * s;
        }
        for t in self.ctmc.graph().transitions() {
            if t.from != t.to {
                out[t.to] += v[t.from] * t.rate / self.lambda;
            }
        }
    }
}

fn check_time(t: f64, tolerance: f64) -> Result<(), AnalyticError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(AnalyticError::InvalidArgument(format!("time {t} must be finite and >= 0")));
    }
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(AnalyticError::InvalidArgument(format!("tolerance {tolerance} must be > 0")));
    }
    Ok(())
}

/// Poisson index cap well beyond where any tail mass is representable.
fn poisson_cap(lt: f64) -> usize {
    (lt + 40.0 * lt.sqrt() + 100.0).ceil() as usize
}

/// State distribution at time `t` from the initial state.
pub fn transient_distribution(ctmc: &CtmcModel, t: f64, tolerance: f64) -> Result<Distribution, AnalyticError> {
    let start = Distribution::point_mass(ctmc.len(), ctmc.initial_index());
    transient_from(ctmc, &start, t, tolerance)
}

/// State distribution at time `t` from an arbitrary initial distribution.
/// The Poisson series is truncated once the neglected mass is below
/// `tolerance`.
pub fn transient_from(
    ctmc: &CtmcModel,
    initial: &Distribution,
    t: f64,
    tolerance: f64,
) -> Result<Distribution, AnalyticError> {
    check_time(t, tolerance)?;
    if initial.0.len() != ctmc.len() {
        return Err(AnalyticError::InvalidArgument("initial distribution length".into()));
    }
    let u = Uniformized::new(ctmc);
    let lt = u.lambda * t;
    if lt == 0.0 {
        return Ok(initial.clone());
    }
    let n = ctmc.len();
    let mut v = initial.0.clone();
    let mut scratch = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let ln_lt = lt.ln();
    let mut log_w = -lt;
    let mut cum = 0.0;
    let cap = poisson_cap(lt);
    for k in 0.. {
        let w = log_w.exp();
        if w > 0.0 {
            acc.iter_mut().zip(&v).for_each(|(a, x)| *a += w * x);
            cum += w;
        }
        if (k as f64 >= lt && 1.0 - cum <= tolerance) || k >= cap {
            break;
        }
        u.step(&v, &mut scratch);
        std::mem::swap(&mut v, &mut scratch);
        log_w += ln_lt - ((k + 1) as f64).ln();
    }
    Ok(Distribution(acc))
}

/// Time-averaged state occupancy `(1/T) ∫_0^T π(t) dt` from the initial state.
pub fn interval_average_distribution(
    ctmc: &CtmcModel,
    horizon: f64,
    tolerance: f64,
) -> Result<Distribution, AnalyticError> {
    check_time(horizon, tolerance)?;
    let n = ctmc.len();
    let start = Distribution::point_mass(n, ctmc.initial_index());
    let u = Uniformized::new(ctmc);
    let lt = u.lambda * horizon;
    if lt == 0.0 {
        return Ok(start);
    }
    // ∫_0^T π(t) dt = (1/Λ) Σ_k v_k P(N_{ΛT} > k)
    let mut v = start.0;
    let mut scratch = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let ln_lt = lt.ln();
    let mut log_w = -lt;
    let mut cum = 0.0;
    let cap = poisson_cap(lt);
    for k in 0.. {
        cum += log_w.exp();
        let tail = (1.0 - cum).max(0.0);
        acc.iter_mut().zip(&v).for_each(|(a, x)| *a += tail * x);
        // Remaining terms sum to at most tail / (1 - lt/(k+2)) ≤ 2·tail here.
        if ((k + 2) as f64 > 2.0 * lt && 2.0 * tail / lt <= tolerance) || k >= cap {
            break;
        }
        u.step(&v, &mut scratch);
        std::mem::swap(&mut v, &mut scratch);
        log_w += ln_lt - ((k + 1) as f64).ln();
    }
    acc.iter_mut().for_each(|a| *a /= lt);
    Ok(Distribution(acc))
}

/// Expected first-passage time from the initial state into the down set.
pub fn mean_time_to_failure(ctmc: &CtmcModel) -> Result<f64, AnalyticError> {
    let init = ctmc.initial_index();
    if !ctmc.is_up(init) {
        return Ok(0.0);
    }
    let n = ctmc.len();
    let adj = successors(ctmc);
    let region = reach(&adj, init, |s| ctmc.is_up(s));
    // States of the region that can step directly into the down set.
    let mut reverse = vec![Vec::new(); n];
    for (s, targets) in adj.iter().enumerate() {
        for &t in targets {
            reverse[t].push(s);
        }
    }
    let mut escapes = vec![false; n];
    let mut stack: Vec<usize> = (0..n)
        .filter(|&s| region[s] && adj[s].iter().any(|&t| !ctmc.is_up(t)))
        .collect();
    for &s in &stack {
        escapes[s] = true;
    }
    while let Some(s) = stack.pop() {
        for &p in &reverse[s] {
            if region[p] && !escapes[p] {
                escapes[p] = true;
                stack.push(p);
            }
        }
    }
    if (0..n).any(|s| region[s] && !escapes[s]) {
        return Err(AnalyticError::NoFailurePath);
    }

    let members: Vec<usize> = (0..n).filter(|&s| region[s]).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &s) in members.iter().enumerate() {
        local[s] = i;
    }
    let m = members.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for t in ctmc.graph().transitions() {
        if t.from == t.to || !region[t.from] {
            continue;
        }
        let i = local[t.from];
        a[(i, i)] += t.rate;
        if region[t.to] {
            a[(i, local[t.to])] -= t.rate;
        }
    }
    let b = DVector::<f64>::from_element(m, 1.0);
    let tau = a.lu().solve(&b).ok_or(AnalyticError::Singular)?;
    Ok(tau[local[init]])
}
