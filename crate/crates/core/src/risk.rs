//! One-step coherent risk maps and their nested composition.
//!
//! Two maps are supported: the conditional expectation and CVaR at level
//! `alpha`, written as `inf_z { z + E[(X - z)_+] / alpha }`. Small `alpha`
//! looks only at the worst tail; `alpha = 1` is the mean.

use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation, Sense};

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RiskSpec {
    Expectation,
    Cvar { alpha: f64 },
}

impl RiskSpec {
    pub fn cvar(alpha: f64) -> Result<Self> {
        let spec = RiskSpec::Cvar { alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RiskSpec::Expectation => Ok(()),
            RiskSpec::Cvar { alpha } if alpha > 0.0 && alpha <= 1.0 => Ok(()),
            RiskSpec::Cvar { alpha } => {
                Err(Error::InvalidInput(format!("CVaR level must lie in (0, 1], got {alpha}")))
            }
        }
    }

    /// Builds a spec from the CLI pair `--risk KIND [--alpha A]`.
    pub fn from_flags(kind: &str, alpha: Option<f64>) -> Result<Self> {
        match (kind, alpha) {
            ("expectation", None) => Ok(RiskSpec::Expectation),
            ("expectation", Some(_)) => {
                Err(Error::InvalidInput("--alpha only applies to --risk cvar".into()))
            }
            ("cvar", Some(a)) => RiskSpec::cvar(a),
            ("cvar", None) => Err(Error::InvalidInput("--risk cvar requires --alpha".into())),
            (other, _) => Err(Error::InvalidInput(format!("unknown risk measure '{other}'"))),
        }
    }

    /// Applies the map to `(value, probability)` atoms, reordering them.
    pub fn apply(&self, atoms: &mut [(f64, f64)]) -> f64 {
        match *self {
            RiskSpec::Expectation => atoms.iter().map(|(v, p)| v * p).sum(),
            RiskSpec::Cvar { alpha } => cvar_closed_form(alpha, atoms).value,
        }
    }
}

impl fmt::Display for RiskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskSpec::Expectation => write!(f, "expectation"),
            RiskSpec::Cvar { alpha } => write!(f, "cvar({alpha})"),
        }
    }
}

/// Finite list of `(value, probability)` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let mut total = 0.0;
        for &(v, p) in &atoms {
            if !v.is_finite() || !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidInput(format!("bad atom ({v}, {p})")));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}")));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn min_value(&self) -> f64 {
        self.atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Closed-form CVaR together with a minimizing threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvarPoint {
    pub value: f64,
    /// The smallest atom value at which the objective attains its minimum.
    pub threshold: f64,
}

/// CVaR of `atoms` by evaluating the objective at every atom value.
///
/// The objective is piecewise linear and convex in `z` with kinks at the atom
/// values, so its infimum is attained at one of them. Sorts `atoms` by value.
pub fn cvar_closed_form(alpha: f64, atoms: &mut [(f64, f64)]) -> CvarPoint {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = atoms.len();
    let mut objective = vec![0.0; n];
    let (mut tail_p, mut tail_pv) = (0.0, 0.0);
    for k in (0..n).rev() {
        let z = atoms[k].0;
        objective[k] = z + (tail_pv - z * tail_p) / alpha;
        tail_p += atoms[k].1;
        tail_pv += atoms[k].1 * atoms[k].0;
    }
    let best = objective.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * (1.0 + best.abs());
    let k = objective.iter().position(|&f| f <= best + slack).unwrap_or(0);
    CvarPoint { value: best, threshold: atoms[k].0 }
}

/// Markov risk transition map applied to a successor-value distribution.
pub fn risk_transition_map(spec: &RiskSpec, d: &DiscreteDistribution) -> Result<f64> {
    spec.validate()?;
    let mut atoms = d.atoms.clone();
    Ok(spec.apply(&mut atoms))
}

/// CVaR via the linear program `min z + (1/alpha) sum p_i u_i`, `u_i ≥ v_i - z`, `u ≥ 0`.
pub fn cvar_lp(alpha: f64, d: &DiscreteDistribution) -> Result<f64> {
    RiskSpec::cvar(alpha)?;
    let n = d.atoms.len();
    let mut objective = vec![1.0];
    objective.extend(d.atoms.iter().map(|(_, p)| p / alpha));
    let mut lp = LinearProgram::new(Sense::Minimize, objective);
    lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
    for (i, &(v, _)) in d.atoms.iter().enumerate() {
        let mut row = vec![0.0; n + 1];
        row[0] = 1.0;
        row[i + 1] = 1.0;
        lp.add_row(row, Relation::Ge, v);
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective),
        other => Err(Error::LpFailure(format!("CVaR program returned {other:?}"))),
    }
}

/// A finite tree of outcomes; each node carries the stage cost incurred there.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTree {
    pub cost: f64,
    pub children: Vec<(f64, OutcomeTree)>,
}

impl OutcomeTree {
    pub fn leaf(cost: f64) -> Self {
        Self { cost, children: Vec::new() }
    }

    pub fn node(cost: f64, children: Vec<(f64, OutcomeTree)>) -> Self {
        Self { cost, children }
    }

    fn check(&self, path: &mut Vec<usize>) -> Result<()> {
        if !self.cost.is_finite() || self.cost < 0.0 {
            return Err(Error::InvalidInput(format!("node {path:?} has cost {}", self.cost)));
        }
        if !self.children.is_empty() {
            let total: f64 = self.children.iter().map(|c| c.0).sum();
            if self.children.iter().any(|c| c.0 < 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "children of node {path:?} have probabilities summing to {total}"
                )));
            }
        }
        for (i, (_, child)) in self.children.iter().enumerate() {
            path.push(i);
            child.check(path)?;
            path.pop();
        }
        Ok(())
    }
}

/// Nested discounted risk `rho(c0 + rho(g c1 + rho(g^2 c2 + ...)))` by backward recursion.
pub fn nested_risk_eval(spec: &RiskSpec, tree: &OutcomeTree, gamma: f64) -> Result<f64> {
    spec.validate()?;
    tree.check(&mut Vec::new())?;
    fn eval(spec: &RiskSpec, node: &OutcomeTree, discount: f64, gamma: f64) -> f64 {
        let stage = discount * node.cost;
        if node.children.is_empty() {
            return stage;
        }
        let mut atoms: Vec<(f64, f64)> = node
            .children
            .iter()
            .map(|(p, child)| (eval(spec, child, discount * gamma, gamma), *p))
            .collect();
        stage + spec.apply(&mut atoms)
    }
    Ok(eval(spec, tree, 1.0, gamma))
}

/// A one-step risk functional on a finite probability space.
pub trait OneStepRisk {
    fn evaluate(&self, atoms: &[(f64, f64)]) -> f64;
}

impl OneStepRisk for RiskSpec {
    fn evaluate(&self, atoms: &[(f64, f64)]) -> f64 {
        let mut owned = atoms.to_vec();
        self.apply(&mut owned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axiom {
    Convexity,
    Monotonicity,
    Translation,
    Homogeneity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomFailure {
    pub axiom: Axiom,
    pub trial: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub trials: usize,
    pub failures: Vec<AxiomFailure>,
}

impl CoherenceReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failed(&self, axiom: Axiom) -> bool {
        self.failures.iter().any(|f| f.axiom == axiom)
    }
}

/// Coherence check of a [`RiskSpec`]; see [`check_coherence_of`].
pub fn check_coherence(spec: &RiskSpec, trials: usize, seed: u64) -> Result<CoherenceReport> {
    spec.validate()?;
    Ok(check_coherence_of(spec, trials, seed))
}

/// Samples random cost vectors on a shared random probability space and
/// checks convexity, monotonicity, translation equivariance and positive
/// homogeneity to within 1e-9.
pub fn check_coherence_of<R: OneStepRisk + ?Sized>(
    measure: &R,
    trials: usize,
    seed: u64,
) -> CoherenceReport {
    const TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for trial in 0..trials {
        let n = rng.random_range(2..=20usize);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let c2: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let bump: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let lambda: f64 = rng.random();
        let k: f64 = rng.random_range(-5.0..5.0);
        let beta: f64 = rng.random_range(0.0..5.0);

        let rho = |values: &[f64]| -> f64 {
            let atoms: Vec<(f64, f64)> = values.iter().copied().zip(probs.iter().copied()).collect();
            measure.evaluate(&atoms)
        };
        let (r1, r2) = (rho(&c), rho(&c2));

        let mix: Vec<f64> = c.iter().zip(&c2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let lhs = rho(&mix);
        let rhs = lambda * r1 + (1.0 - lambda) * r2;
        if lhs > rhs + TOL {
            failures.push(AxiomFailure { axiom: Axiom::Convexity, trial, lhs, rhs });
        }

        let larger: Vec<f64> = c.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let big = rho(&larger);
        if r1 > big + TOL {
            failures.push(AxiomFailure { axiom: Axiom::Monotonicity, trial, lhs: r1, rhs: big });
        }

        let shifted: Vec<f64> = c.iter().map(|a| a + k).collect();
        let lhs = rho(&shifted);
        if (lhs - (r1 + k)).abs() > TOL {
            failures.push(AxiomFailure { axiom: Axiom::Translation, trial, lhs, rhs: r1 + k });
        }

        let scaled: Vec<f64> = c.iter().map(|a| beta * a).collect();
        let lhs = rho(&scaled);
        if (lhs - beta * r1).abs() > TOL {
            failures.push(AxiomFailure { axiom: Axiom::Homogeneity, trial, lhs, rhs: beta * r1 });
        }
    }
    CoherenceReport { trials, failures }
}
