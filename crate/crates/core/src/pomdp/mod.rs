//! Finite POMDP model and Bayesian belief operations.
//!
//! Observations are emitted by states: `O(o | s)`. Transition rows are stored
//! contiguously per `(s, a)` so that `transition_row(s, a)` is a slice over
//! successor states.

mod format;
pub mod grid;

use std::fmt;

use crate::error::{Error, Result};

pub use format::{parse_pomdp, parse_pomdp_unchecked, write_pomdp};
pub use grid::{make_gridworld, perturb_scenario, GridWorldSpec};

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Pomdp {
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    /// `[s][a][s']`
    transition: Vec<f64>,
    /// `[s][o]`
    observation: Vec<f64>,
    /// `[s][a]`
    cost: Vec<f64>,
    initial: Vec<f64>,
    discount: f64,
}

impl Pomdp {
    /// An all-zero model over the given names; fill it with the setters.
    pub fn new(states: Vec<String>, actions: Vec<String>, observations: Vec<String>, discount: f64) -> Self {
        let (ns, na, no) = (states.len(), actions.len(), observations.len());
        Self {
            states,
            actions,
            observations,
            transition: vec![0.0; ns * na * ns],
            observation: vec![0.0; ns * no],
            cost: vec![0.0; ns * na],
            initial: vec![0.0; ns],
            discount,
        }
    }

    /// Builds a model from nested tables: `transition[s][a][s']`,
    /// `observation[s][o]`, `cost[s][a]`. Names are `s0..`, `a0..`, `o0..`.
    pub fn from_tables(
        transition: &[Vec<Vec<f64>>],
        observation: &[Vec<f64>],
        cost: &[Vec<f64>],
        initial: &[f64],
        discount: f64,
    ) -> Result<Self> {
        let ns = transition.len();
        let na = transition.first().map_or(0, |r| r.len());
        let no = observation.first().map_or(0, |r| r.len());
        if ns == 0 || na == 0 || no == 0 {
            return Err(Error::DimensionMismatch("model needs states, actions and observations".into()));
        }
        let shape_ok = transition.iter().all(|r| r.len() == na && r.iter().all(|row| row.len() == ns))
            && observation.len() == ns
            && observation.iter().all(|r| r.len() == no)
            && cost.len() == ns
            && cost.iter().all(|r| r.len() == na)
            && initial.len() == ns;
        if !shape_ok {
            return Err(Error::DimensionMismatch("inconsistent table shapes".into()));
        }
        let names = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
        let mut m = Pomdp::new(names("s", ns), names("a", na), names("o", no), discount);
        for s in 0..ns {
            for a in 0..na {
                for s2 in 0..ns {
                    m.set_transition(s, a, s2, transition[s][a][s2]);
                }
                m.set_cost(s, a, cost[s][a]);
            }
            for o in 0..no {
                m.set_observation(s, o, observation[s][o]);
            }
        }
        m.set_initial(initial.to_vec());
        Ok(m)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn observation_names(&self) -> &[String] {
        &self.observations
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn set_discount(&mut self, discount: f64) {
        self.discount = discount;
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn set_initial(&mut self, initial: Vec<f64>) {
        assert_eq!(initial.len(), self.num_states(), "initial distribution length");
        self.initial = initial;
    }

    fn t_index(&self, s: usize, a: usize) -> usize {
        (s * self.num_actions() + a) * self.num_states()
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[self.t_index(s, a) + next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let i = self.t_index(s, a);
        &self.transition[i..i + self.num_states()]
    }

    pub fn set_transition(&mut self, s: usize, a: usize, next: usize, p: f64) {
        let i = self.t_index(s, a);
        self.transition[i + next] = p;
    }

    pub fn observation(&self, s: usize, o: usize) -> f64 {
        self.observation[s * self.num_observations() + o]
    }

    pub fn observation_row(&self, s: usize) -> &[f64] {
        let no = self.num_observations();
        &self.observation[s * no..(s + 1) * no]
    }

    pub fn set_observation(&mut self, s: usize, o: usize, p: f64) {
        let no = self.num_observations();
        self.observation[s * no + o] = p;
    }

    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[s * self.num_actions() + a]
    }

    pub fn set_cost(&mut self, s: usize, a: usize, c: f64) {
        let na = self.num_actions();
        self.cost[s * na + a] = c;
    }

    pub fn max_cost(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    /// True when every action keeps `s` in place with probability one.
    pub fn is_absorbing(&self, s: usize) -> bool {
        (0..self.num_actions()).all(|a| self.transition(s, a, s) == 1.0)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    TransitionRow,
    ObservationRow,
    InitialDistribution,
    NegativeProbability,
    NegativeCost,
    NonFinite,
    Discount,
    EmptySet,
}

/// One failed model invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: String,
    pub residual: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {} (residual {:e})", self.kind, self.location, self.residual)
    }
}

/// Lists every violated model invariant; empty when the model is well formed.
pub fn validate_pomdp(m: &Pomdp) -> Vec<Violation> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, kind, location: String, residual| {
        out.push(Violation { kind, location, residual })
    };
    if m.num_states() == 0 || m.num_actions() == 0 || m.num_observations() == 0 {
        push(&mut out, ViolationKind::EmptySet, "model".into(), 0.0);
        return out;
    }
    if !(m.discount > 0.0 && m.discount < 1.0) {
        push(&mut out, ViolationKind::Discount, "discount".into(), m.discount);
    }
    let (ns, na) = (m.num_states(), m.num_actions());
    for s in 0..ns {
        for a in 0..na {
            let row = m.transition_row(s, a);
            let loc = format!("T({}, {})", m.states[s], m.actions[a]);
            check_row(&mut out, row, ViolationKind::TransitionRow, &loc);
            let c = m.cost(s, a);
            if !c.is_finite() {
                push(&mut out, ViolationKind::NonFinite, format!("c({}, {})", m.states[s], m.actions[a]), c);
            } else if c < 0.0 {
                push(&mut out, ViolationKind::NegativeCost, format!("c({}, {})", m.states[s], m.actions[a]), c);
            }
        }
        let loc = format!("O(.|{})", m.states[s]);
        check_row(&mut out, m.observation_row(s), ViolationKind::ObservationRow, &loc);
    }
    check_row(&mut out, &m.initial, ViolationKind::InitialDistribution, "initial");
    out
}

fn check_row(out: &mut Vec<Violation>, row: &[f64], kind: ViolationKind, loc: &str) {
    if let Some(bad) = row.iter().find(|p| !p.is_finite()) {
        out.push(Violation { kind: ViolationKind::NonFinite, location: loc.to_string(), residual: *bad });
        return;
    }
    if let Some(neg) = row.iter().copied().find(|&p| p < 0.0) {
        out.push(Violation { kind: ViolationKind::NegativeProbability, location: loc.to_string(), residual: neg });
    }
    let residual = 1.0 - row.iter().sum::<f64>();
    if residual.abs() > SUM_TOL {
        out.push(Violation { kind, location: loc.to_string(), residual });
    }
}

/// Probability distribution over hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput("belief entries must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidInput(format!("belief sums to {total}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point(n: usize, s: usize) -> Self {
        let mut v = vec![0.0; n];
        v[s] = 1.0;
        Self(v)
    }

    /// Normalizes non-negative weights; `None` if they sum to zero.
    pub(crate) fn normalized(mut weights: Vec<f64>) -> Option<Self> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return None;
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Some(Self(weights))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn l1_distance(&self, other: &Belief) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(b, v)| b * v).sum()
    }
}

/// Posterior after the first observation: `b0(s) ∝ init(s) O(o0|s)`.
pub fn belief_init(m: &Pomdp, o0: usize) -> Result<Belief> {
    let weights = (0..m.num_states()).map(|s| m.initial[s] * m.observation(s, o0)).collect();
    Belief::normalized(weights).ok_or(Error::ImpossibleObservation { observation: o0 })
}

/// Predicted state distribution after acting: `sum_s T(s'|s,a) b(s)`.
pub fn predict(m: &Pomdp, b: &Belief, a: usize) -> Vec<f64> {
    let ns = m.num_states();
    let mut next = vec![0.0; ns];
    for (s, &bs) in b.probs().iter().enumerate() {
        if bs == 0.0 {
            continue;
        }
        for (n, t) in next.iter_mut().zip(m.transition_row(s, a)) {
            *n += t * bs;
        }
    }
    next
}

/// Bayes filter: `b'(s) ∝ O(o|s) sum_{s'} T(s|s',a) b(s')`.
pub fn belief_update(m: &Pomdp, b: &Belief, a: usize, o: usize) -> Result<Belief> {
    let weights = predict(m, b, a)
        .into_iter()
        .enumerate()
        .map(|(s, p)| p * m.observation(s, o))
        .collect();
    Belief::normalized(weights).ok_or(Error::ImpossibleObservation { observation: o })
}

/// One successor of a belief under an action.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSuccessor {
    pub observation: usize,
    pub probability: f64,
    pub belief: Belief,
}

/// Every observation with positive probability after taking `a` in `b`,
/// with its probability and the updated belief.
pub fn belief_successors(m: &Pomdp, b: &Belief, a: usize) -> Vec<BeliefSuccessor> {
    let predicted = predict(m, b, a);
    (0..m.num_observations())
        .filter_map(|o| {
            let weights: Vec<f64> =
                predicted.iter().enumerate().map(|(s, p)| p * m.observation(s, o)).collect();
            let probability: f64 = weights.iter().sum();
            if probability <= 0.0 {
                return None;
            }
            Belief::normalized(weights).map(|belief| BeliefSuccessor { observation: o, probability, belief })
        })
        .collect()
}
