//! Risk-sensitive policy evaluation on the global chain.
//!
//! Values solve `V(x) = c(x) + γ R{V, T(x, ·)}` and are found by iterating
//! the operator from zero; since it is a γ-contraction, stopping once
//! `‖V_{k+1} − V_k‖ ≤ tol (1−γ)/γ` bounds the true residual by `tol`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fsc::{build_global_chain, Fsc, GlobalChain};
use crate::pomdp::{Belief, Pomdp};
use crate::risk::RiskSpec;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const VALUES_FORMAT: &str = "riskfsc-values";
pub const VALUES_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub num_states: usize,
    pub num_nodes: usize,
    /// `V[s, g]` at index `s * num_nodes + g`.
    pub values: Vec<f64>,
    pub spec: RiskSpec,
    pub gamma: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl ValueTable {
    pub fn get(&self, s: usize, g: usize) -> f64 {
        self.values[s * self.num_nodes + g]
    }

    /// `V(·, g)` as a vector over states.
    pub fn column(&self, g: usize) -> Vec<f64> {
        (0..self.num_states).map(|s| self.get(s, g)).collect()
    }

    /// `Σ_s ι(s) V(s, g)`.
    pub fn dot(&self, weights: &[f64], g: usize) -> f64 {
        weights.iter().enumerate().map(|(s, w)| w * self.get(s, g)).sum()
    }

    /// The bounded-policy-iteration objective `min_g ι·V(·,g)`.
    pub fn objective(&self, initial: &[f64]) -> f64 {
        (0..self.num_nodes).map(|g| self.dot(initial, g)).fold(f64::INFINITY, f64::min)
    }

    /// Risk of the whole cost process: `R` applied to `V` under a law on global states.
    pub fn risk_at(&self, initial_global: &[f64]) -> f64 {
        let mut atoms: Vec<(f64, f64)> =
            initial_global.iter().zip(&self.values).filter(|(p, _)| **p > 0.0).map(|(p, v)| (*v, *p)).collect();
        self.spec.apply(&mut atoms)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# format: {VALUES_FORMAT} {VALUES_FORMAT_VERSION}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "g", "value"])?;
        for s in 0..self.num_states {
            for g in 0..self.num_nodes {
                w.write_record([s.to_string(), g.to_string(), self.get(s, g).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Per-state optimum table: `s, value, node`.
    pub fn write_optimum_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# format: {VALUES_FORMAT}-optimum {VALUES_FORMAT_VERSION}")?;
        let (best, arg) = optimal_state_values(self);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "value", "g"])?;
        for s in 0..self.num_states {
            w.write_record([s.to_string(), best[s].to_string(), arg[s].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`ValueTable::write_csv`]. Only the values
    /// are recovered; metadata comes from the caller.
    pub fn read_csv(text: &str, spec: RiskSpec, gamma: f64) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse_err = |what: &str| Error::InvalidInput(format!("value table: bad {what} in {rec:?}"));
            let s: usize = rec.get(0).and_then(|x| x.parse().ok()).ok_or_else(|| parse_err("s"))?;
            let g: usize = rec.get(1).and_then(|x| x.parse().ok()).ok_or_else(|| parse_err("g"))?;
            let v: f64 = rec.get(2).and_then(|x| x.parse().ok()).ok_or_else(|| parse_err("value"))?;
            rows.push((s, g, v));
        }
        let ns = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let ng = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        if rows.len() != ns * ng {
            return Err(Error::InvalidInput(format!("value table has {} rows, expected {}", rows.len(), ns * ng)));
        }
        let mut values = vec![0.0; ns * ng];
        for (s, g, v) in rows {
            values[s * ng + g] = v;
        }
        Ok(Self { num_states: ns, num_nodes: ng, values, spec, gamma, iterations: 0, residual: f64::NAN })
    }
}

/// Applies the risk Bellman operator of `chain` to `v`, writing into `out`.
pub fn bellman(chain: &GlobalChain, spec: &RiskSpec, gamma: f64, v: &[f64], out: &mut [f64]) {
    let mut atoms = Vec::new();
    for (x, row) in chain.rows.iter().enumerate() {
        atoms.clear();
        atoms.extend(row.iter().map(|&(j, p)| (v[j], p)));
        out[x] = chain.cost[x] + gamma * spec.apply(&mut atoms);
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Number of sweeps after which the contraction must have met `tol`, plus slack.
pub fn iteration_cap(tol: f64, gamma: f64, c_max: f64) -> usize {
    if c_max <= 0.0 || gamma <= 0.0 {
        return 64;
    }
    let ratio = tol * (1.0 - gamma) / c_max;
    if ratio >= 1.0 {
        return 64;
    }
    (ratio.ln() / gamma.ln()).ceil() as usize + 64
}

/// Evaluates the controller-induced chain with the model's discount.
pub fn evaluate_fsc(m: &Pomdp, f: &Fsc, spec: &RiskSpec, tol: f64) -> Result<ValueTable> {
    f.validate()?;
    let chain = build_global_chain(m, f)?;
    evaluate_chain(&chain, spec, m.discount(), tol)
}

pub fn evaluate_chain(chain: &GlobalChain, spec: &RiskSpec, gamma: f64, tol: f64) -> Result<ValueTable> {
    spec.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!("discount must lie in [0, 1), got {gamma}")));
    }
    let c_max = chain.cost.iter().copied().fold(0.0, f64::max);
    let cap = iteration_cap(tol, gamma, c_max);
    let stop = if gamma == 0.0 { f64::INFINITY } else { tol * (1.0 - gamma) / gamma };
    let mut v = vec![0.0; chain.len()];
    let mut next = vec![0.0; chain.len()];
    let mut change = f64::INFINITY;
    for k in 1..=cap {
        bellman(chain, spec, gamma, &v, &mut next);
        change = sup_distance(&v, &next);
        std::mem::swap(&mut v, &mut next);
        if change <= stop {
            bellman(chain, spec, gamma, &v, &mut next);
            let residual = sup_distance(&v, &next);
            return Ok(ValueTable {
                num_states: chain.num_states,
                num_nodes: chain.num_nodes,
                values: v,
                spec: *spec,
                gamma,
                iterations: k,
                residual,
            });
        }
    }
    Err(Error::NonConvergence { iterations: cap, last_change: change })
}

/// `‖V − B(V)‖_∞` for the chain induced by `(m, f)`.
pub fn residual(m: &Pomdp, f: &Fsc, spec: &RiskSpec, v: &ValueTable) -> Result<f64> {
    let chain = build_global_chain(m, f)?;
    if v.values.len() != chain.len() {
        return Err(Error::DimensionMismatch(format!(
            "value table has {} entries, chain has {}",
            v.values.len(),
            chain.len()
        )));
    }
    let mut out = vec![0.0; chain.len()];
    bellman(&chain, spec, m.discount(), &v.values, &mut out);
    Ok(sup_distance(&v.values, &out))
}

/// `V*(s) = min_g V(s, g)` with the lowest minimizing node.
pub fn optimal_state_values(v: &ValueTable) -> (Vec<f64>, Vec<usize>) {
    (0..v.num_states)
        .map(|s| {
            let mut best = (v.get(s, 0), 0);
            for g in 1..v.num_nodes {
                if v.get(s, g) < best.0 {
                    best = (v.get(s, g), g);
                }
            }
            best
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefValue {
    /// `V([b, g])` per node.
    pub per_node: Vec<f64>,
    pub value: f64,
    pub argmin: usize,
}

/// Values of the controller started in each node when the state is drawn from `b`.
pub fn belief_value(v: &ValueTable, b: &Belief) -> BeliefValue {
    let per_node: Vec<f64> = (0..v.num_nodes).map(|g| v.dot(b.probs(), g)).collect();
    let mut argmin = 0;
    for (g, x) in per_node.iter().enumerate() {
        if *x < per_node[argmin] {
            argmin = g;
        }
    }
    BeliefValue { value: per_node[argmin], argmin, per_node }
}
