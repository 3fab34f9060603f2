//! Monte-Carlo execution of controllers and the perturbed-map scenario study.

use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fsc::Fsc;
use crate::pomdp::grid::{make_gridworld, perturb_with, CRASHED};
use crate::pomdp::{GridWorldSpec, Pomdp};
use crate::risk::cvar_closed_form;

pub const DEFAULT_MAX_STEPS: usize = 200;
pub const SCENARIO_FORMAT: &str = "riskfsc-scenarios";
pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Goal,
    Crash,
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Goal => "goal",
            Outcome::Crash => "crash",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Step {
    pub state: usize,
    pub node: usize,
    pub observation: usize,
    pub action: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub steps: Vec<Step>,
    pub final_state: usize,
    pub outcome: Outcome,
    pub discounted_cost: f64,
}

fn sample(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Absorbing, cost-free states end a rollout: `CRASHED` is a crash and any
/// other such state is the goal. Absorbing states that still charge cost are
/// simulated like any other.
pub fn classify(m: &Pomdp, s: usize) -> Option<Outcome> {
    if !m.is_absorbing(s) || (0..m.num_actions()).any(|a| m.cost(s, a) != 0.0) {
        return None;
    }
    Some(if m.state_names()[s] == CRASHED { Outcome::Crash } else { Outcome::Goal })
}

/// Samples one closed-loop trajectory. Stops on an absorbing state or after
/// `max_steps` actions.
pub fn rollout(m: &Pomdp, f: &Fsc, seed: u64, max_steps: usize) -> TrajectoryRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = rollout_with(m, f, &mut rng, max_steps);
    rec.seed = seed;
    rec
}

pub fn rollout_with(m: &Pomdp, f: &Fsc, rng: &mut ChaCha8Rng, max_steps: usize) -> TrajectoryRecord {
    let na = m.num_actions();
    let gamma = m.discount();
    let mut s = sample(rng, m.initial());
    let mut g = sample(rng, f.initial());
    let mut steps = Vec::new();
    let mut discounted = 0.0;
    let mut weight = 1.0;
    while steps.len() < max_steps && classify(m, s).is_none() {
        let o = sample(rng, m.observation_row(s));
        let k = sample(rng, f.row(g, o));
        let (next_node, a) = (k / na, k % na);
        let cost = m.cost(s, a);
        steps.push(Step { state: s, node: g, observation: o, action: a, cost });
        discounted += weight * cost;
        weight *= gamma;
        s = sample(rng, m.transition_row(s, a));
        g = next_node;
    }
    TrajectoryRecord {
        seed: 0,
        steps,
        final_state: s,
        outcome: classify(m, s).unwrap_or(Outcome::Timeout),
        discounted_cost: discounted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub index: usize,
    pub outcome: Outcome,
    pub steps: usize,
    pub discounted_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub seed: u64,
    pub perturb: f64,
    pub max_steps: usize,
    pub scenarios: Vec<ScenarioResult>,
    pub failures: usize,
    pub successes: usize,
    pub timeouts: usize,
}

impl ScenarioReport {
    pub fn count(&self) -> usize {
        self.scenarios.len()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.scenarios.iter().map(|r| r.discounted_cost).collect()
    }

    pub fn mean_cost(&self) -> f64 {
        empirical_mean(&self.costs())
    }

    pub fn cvar_cost(&self, alpha: f64) -> f64 {
        empirical_cvar(&self.costs(), alpha)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# format: {SCENARIO_FORMAT} {SCENARIO_FORMAT_VERSION}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "seed", "stream", "outcome", "steps", "discounted_cost"])?;
        for r in &self.scenarios {
            w.write_record([
                r.index.to_string(),
                self.seed.to_string(),
                r.index.to_string(),
                r.outcome.as_str().to_string(),
                r.steps.to_string(),
                r.discounted_cost.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn empirical_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// CVaR of the empirical distribution that puts mass `1/n` on each sample.
pub fn empirical_cvar(xs: &[f64], alpha: f64) -> f64 {
    let w = 1.0 / xs.len() as f64;
    let mut atoms: Vec<(f64, f64)> = xs.iter().map(|&x| (x, w)).collect();
    cvar_closed_form(alpha, &mut atoms).value
}

/// Runs `f`, synthesized on `base`, on `n` perturbed copies of the map.
///
/// Scenario `i` draws both its perturbation and its rollout from stream `i`
/// of a generator seeded with `seed`, so earlier scenarios do not depend on
/// how many follow.
pub fn run_scenarios(
    base: &GridWorldSpec,
    f: &Fsc,
    n: usize,
    perturb_p: f64,
    seed: u64,
    max_steps: usize,
) -> Result<ScenarioReport> {
    if n == 0 || max_steps == 0 {
        return Err(Error::InvalidInput("scenario count and step limit must be positive".into()));
    }
    if !(0.0..=1.0).contains(&perturb_p) {
        return Err(Error::InvalidInput(format!("perturbation probability {perturb_p} outside [0, 1]")));
    }
    base.validate()?;
    let mut scenarios = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let spec = perturb_with(base, perturb_p, &mut rng);
        let m = make_gridworld(&spec)?;
        f.check_compatible(&m)?;
        let rec = rollout_with(&m, f, &mut rng, max_steps);
        scenarios.push(ScenarioResult {
            index: i,
            outcome: rec.outcome,
            steps: rec.steps.len(),
            discounted_cost: rec.discounted_cost,
        });
    }
    let count = |o: Outcome| scenarios.iter().filter(|r| r.outcome == o).count();
    Ok(ScenarioReport {
        seed,
        perturb: perturb_p,
        max_steps,
        failures: count(Outcome::Crash),
        successes: count(Outcome::Goal),
        timeouts: count(Outcome::Timeout),
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Pomdp {
        // s0 --a0--> s1 --a0--> s2 (absorbing "DONE"); a1 stays put.
        let mut m = Pomdp::new(
            vec!["s0".into(), "s1".into(), "DONE".into()],
            vec!["go".into(), "wait".into()],
            vec!["o".into()],
            0.5,
        );
        for s in 0..3 {
            m.set_observation(s, 0, 1.0);
            m.set_transition(s, 1, s, 1.0);
            m.set_transition(s, 0, (s + 1).min(2), 1.0);
            if s < 2 {
                m.set_cost(s, 0, 1.0);
                m.set_cost(s, 1, 2.0);
            }
        }
        m.set_initial(vec![1.0, 0.0, 0.0]);
        m
    }

    #[test]
    fn deterministic_path() {
        let m = line();
        let mut f = Fsc::zeros(1, 2, 1);
        f.set_deterministic(0, 0, 0, 0);
        let r = rollout(&m, &f, 3, 10);
        assert_eq!(r.steps.iter().map(|s| s.state).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(r.outcome, Outcome::Goal);
        assert_eq!(r.discounted_cost, 1.5);
    }

    #[test]
    fn waiting_times_out() {
        let m = line();
        let mut f = Fsc::zeros(1, 2, 1);
        f.set_deterministic(0, 0, 0, 1);
        let r = rollout(&m, &f, 3, 7);
        assert_eq!(r.outcome, Outcome::Timeout);
        assert_eq!(r.steps.len(), 7);
    }

    #[test]
    fn same_seed_same_record() {
        let m = line();
        let f = Fsc::uniform(1, 2, 1);
        assert_eq!(rollout(&m, &f, 11, 50), rollout(&m, &f, 11, 50));
    }

    #[test]
    fn empirical_risk() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_mean(&xs), 2.5);
        assert_eq!(empirical_cvar(&xs, 0.25), 4.0);
        assert_eq!(empirical_cvar(&xs, 0.5), 3.5);
        assert_eq!(empirical_cvar(&xs, 1.0), 2.5);
    }
}
