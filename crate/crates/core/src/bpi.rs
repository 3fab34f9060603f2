//! Bounded policy iteration: evaluate, improve each node in turn, and grow
//! the controller when every node is stuck, until the node budget binds or
//! nothing changes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::escape::{add_istates, EscapeReport};
use crate::eval::{evaluate_fsc, ValueTable, DEFAULT_TOL};
use crate::fsc::Fsc;
use crate::improve::{improve_istate_with, init_istate, tangent_beliefs, EPSILON_THRESHOLD};
use crate::pomdp::Pomdp;
use crate::risk::RiskSpec;

pub const TRACE_FORMAT: &str = "riskfsc-trace";
pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpiConfig {
    pub max_nodes: usize,
    pub new_nodes: usize,
    pub spec: RiskSpec,
    pub gamma: f64,
    pub tol: f64,
    pub epsilon_threshold: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Fall back to the per-state slack program when ε is tangent.
    #[serde(default = "enabled")]
    pub per_state_fallback: bool,
}

fn enabled() -> bool {
    true
}

impl BpiConfig {
    pub fn new(spec: RiskSpec, gamma: f64, max_nodes: usize, new_nodes: usize) -> Self {
        Self {
            max_nodes,
            new_nodes,
            spec,
            gamma,
            tol: DEFAULT_TOL,
            epsilon_threshold: EPSILON_THRESHOLD,
            max_iterations: 200,
            seed: 0,
            per_state_fallback: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.max_nodes == 0 {
            return Err(Error::InvalidInput("the node budget must be at least 1".into()));
        }
        if self.new_nodes > self.max_nodes {
            return Err(Error::InvalidInput(format!(
                "nodes added per escape ({}) exceed the budget ({})",
                self.new_nodes, self.max_nodes
            )));
        }
        if !(self.tol > 0.0 && self.epsilon_threshold > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidInput(format!("discount must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BpiIteration {
    pub iteration: usize,
    pub nodes: usize,
    pub objective_before: f64,
    pub objective_after: f64,
    /// ε found for each node in this pass.
    pub epsilons: Vec<f64>,
    pub accepted: Vec<usize>,
    /// Largest `V_new − V_old` over accepted improvements (≤ 0 up to solver noise).
    pub max_increase: Option<f64>,
    pub escape: Option<EscapeReport>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BpiTrace {
    pub format: String,
    pub version: u32,
    pub config: BpiConfig,
    pub iterations: Vec<BpiIteration>,
    pub cap_reached: bool,
    pub initial_node: usize,
    pub final_objective: f64,
}

impl BpiTrace {
    pub fn objectives(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.iterations.first().map(|r| r.objective_before).into_iter().collect();
        out.extend(self.iterations.iter().map(|r| r.objective_after));
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("trace serializes");
        text.push('\n');
        text
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# format: {TRACE_FORMAT}-objectives {TRACE_FORMAT_VERSION}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "nodes", "objective_before", "objective_after", "accepted", "added"])?;
        for r in &self.iterations {
            w.write_record([
                r.iteration.to_string(),
                r.nodes.to_string(),
                r.objective_before.to_string(),
                r.objective_after.to_string(),
                r.accepted.len().to_string(),
                r.escape.as_ref().map_or(0, |e| e.n_added()).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `k` nodes, every row uniform over (successor, action), `κ` on node 0.
/// The seed is reserved for jitter and currently unused.
pub fn default_initial_fsc(m: &Pomdp, k: usize, _seed: u64) -> Result<Fsc> {
    if k == 0 {
        return Err(Error::InvalidInput("an initial controller needs at least one node".into()));
    }
    Ok(Fsc::uniform(k, m.num_actions(), m.num_observations()))
}

fn max_increase(old: &ValueTable, new: &ValueTable) -> f64 {
    new.values.iter().zip(&old.values).map(|(n, o)| n - o).fold(f64::NEG_INFINITY, f64::max)
}

/// Runs bounded policy iteration from `f0`. The model's discount is
/// replaced by `cfg.gamma`. The returned controller starts in the node that
/// is best under the initial distribution.
pub fn run_bpi(m: &Pomdp, f0: &Fsc, cfg: &BpiConfig) -> Result<(Fsc, ValueTable, BpiTrace)> {
    cfg.validate()?;
    f0.validate()?;
    f0.check_compatible(m)?;
    if f0.num_nodes() > cfg.max_nodes {
        return Err(Error::InvalidInput(format!(
            "initial controller has {} nodes, budget is {}",
            f0.num_nodes(),
            cfg.max_nodes
        )));
    }
    let mut m = m.clone();
    m.set_discount(cfg.gamma);
    let spec = cfg.spec;
    let initial = m.initial().to_vec();

    let mut f = f0.clone();
    let mut v = evaluate_fsc(&m, &f, &spec, cfg.tol)?;
    let mut iterations = Vec::new();
    let mut cap_reached = false;
    loop {
        if iterations.len() >= cfg.max_iterations {
            cap_reached = true;
            break;
        }
        let objective_before = v.objective(&initial);
        let mut epsilons = Vec::with_capacity(f.num_nodes());
        let mut accepted = Vec::new();
        let mut stuck = Vec::new();
        let mut worst_increase: Option<f64> = None;
        for g in 0..f.num_nodes() {
            let r = improve_istate_with(&m, &f, g, &v, &spec, cfg.per_state_fallback)?;
            epsilons.push(r.epsilon);
            if r.epsilon > cfg.epsilon_threshold || r.per_state {
                let mut candidate = f.clone();
                r.apply(&mut candidate);
                let next = evaluate_fsc(&m, &candidate, &spec, cfg.tol)?;
                let inc = max_increase(&v, &next);
                worst_increase = Some(worst_increase.map_or(inc, |w| w.max(inc)));
                f = candidate;
                v = next;
                accepted.push(g);
            } else {
                stuck.push(r);
            }
        }

        let mut escape = None;
        if accepted.is_empty() && f.num_nodes() < cfg.max_nodes && cfg.new_nodes > 0 {
            let mut tangents = Vec::new();
            for r in stuck.iter().filter(|r| !r.improved()) {
                tangents.extend(tangent_beliefs(r)?);
            }
            let budget = cfg.new_nodes.min(cfg.max_nodes - f.num_nodes());
            let (grown, report) = add_istates(&m, &f, &v, &spec, &tangents, budget);
            if report.n_added() > 0 {
                f = grown;
                v = evaluate_fsc(&m, &f, &spec, cfg.tol)?;
            }
            escape = Some(report);
        }
        let added = escape.as_ref().map_or(0, |e| e.n_added());
        iterations.push(BpiIteration {
            iteration: iterations.len() + 1,
            nodes: f.num_nodes(),
            objective_before,
            objective_after: v.objective(&initial),
            epsilons,
            accepted: accepted.clone(),
            max_increase: worst_increase,
            escape,
            residual: v.residual,
        });
        if accepted.is_empty() && added == 0 {
            break;
        }
    }

    let g0 = init_istate(&v, &initial);
    f.set_initial_node(g0);
    let trace = BpiTrace {
        format: TRACE_FORMAT.into(),
        version: TRACE_FORMAT_VERSION,
        config: *cfg,
        iterations,
        cap_reached,
        initial_node: g0,
        final_objective: v.objective(&initial),
    };
    Ok((f, v, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_model() -> Pomdp {
        Pomdp::from_tables(
            &[vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![vec![0.3, 0.7], vec![0.3, 0.7]]],
            &[vec![1.0], vec![1.0]],
            &[vec![2.0, 1.0], vec![2.0, 1.0]],
            &[1.0, 0.0],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn uniform_initial_controller() {
        let m = chain_model();
        let f = default_initial_fsc(&m, 2, 0).unwrap();
        assert!(f.row(1, 0).iter().all(|w| *w == 0.25));
        f.validate().unwrap();
        assert!(default_initial_fsc(&m, 0, 0).is_err());
    }

    #[test]
    fn stuck_controller_returns_unchanged() {
        let m = chain_model();
        let mut f0 = Fsc::zeros(1, 2, 1);
        f0.set_deterministic(0, 0, 0, 1);
        let cfg = BpiConfig::new(RiskSpec::Expectation, 0.9, 1, 0);
        let (f, _, trace) = run_bpi(&m, &f0, &cfg).unwrap();
        assert_eq!(f, f0);
        assert_eq!(trace.iterations.len(), 1);
    }

    #[test]
    fn finds_cheap_action_and_is_monotone() {
        let m = chain_model();
        let cfg = BpiConfig::new(RiskSpec::Cvar { alpha: 0.5 }, 0.9, 1, 0);
        let (f, v, trace) = run_bpi(&m, &Fsc::uniform(1, 2, 1), &cfg).unwrap();
        assert!((f.prob(0, 0, 0, 1) - 1.0).abs() < 1e-9);
        assert!((v.get(0, 0) - 10.0).abs() < 1e-6);
        let obj = trace.objectives();
        assert!(obj.windows(2).all(|w| w[1] <= w[0] + 1e-6));
    }

    #[test]
    fn config_checks() {
        let mut cfg = BpiConfig::new(RiskSpec::Expectation, 0.9, 1, 2);
        assert!(cfg.validate().is_err());
        cfg.new_nodes = 1;
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
    }
}
