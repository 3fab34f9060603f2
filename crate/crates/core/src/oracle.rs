//! Brute-force ground truth for small instances.
//!
//! Horizon `H` covers stages `0..=H`. Truncation error is bounded by
//! `γ^H c_max / (1 − γ)`.

use crate::error::{Error, Result};
use crate::fsc::{build_global_chain, cylinder_probability, Fsc, GlobalChain};
use crate::pomdp::Pomdp;
use crate::risk::{nested_risk_eval, OutcomeTree, RiskSpec};

/// Leaf budget for explicit outcome trees.
pub const TREE_LEAF_CAP: usize = 1_000_000;
/// Budget on candidate value vectors per level of the policy enumeration.
pub const POLICY_CAP: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonBound {
    pub horizon: usize,
    pub tail: f64,
}

impl HorizonBound {
    pub fn new(horizon: usize, gamma: f64, c_max: f64) -> Self {
        Self { horizon, tail: gamma.powi(horizon as i32) * c_max / (1.0 - gamma) }
    }

    /// Smallest horizon whose tail bound is below `max_tail`.
    pub fn with_tail_below(gamma: f64, c_max: f64, max_tail: f64) -> Self {
        let mut h = 0;
        while Self::new(h, gamma, c_max).tail >= max_tail {
            h += 1;
        }
        Self::new(h, gamma, c_max)
    }
}

/// Nested risk of the first `H + 1` stages of the controller's cost process.
///
/// The recursion runs over (stage, global state) rather than over whole
/// paths: the conditional law of the future given a path prefix depends
/// only on its last global state, so both give the same number.
pub fn brute_force_fsc_risk(m: &Pomdp, f: &Fsc, spec: &RiskSpec, horizon: usize) -> Result<f64> {
    spec.validate()?;
    let chain = build_global_chain(m, f)?;
    let gamma = m.discount();
    let mut w = chain.cost.clone();
    let mut atoms = Vec::new();
    for _ in 0..horizon {
        let next: Vec<f64> = chain
            .rows
            .iter()
            .enumerate()
            .map(|(x, row)| {
                atoms.clear();
                atoms.extend(row.iter().map(|&(j, p)| (w[j], p)));
                chain.cost[x] + gamma * spec.apply(&mut atoms)
            })
            .collect();
        w = next;
    }
    Ok(root_risk(&chain, spec, &w))
}

fn root_risk(chain: &GlobalChain, spec: &RiskSpec, w: &[f64]) -> f64 {
    let mut atoms: Vec<(f64, f64)> =
        chain.initial.iter().zip(w).filter(|(p, _)| **p > 0.0).map(|(p, v)| (*v, *p)).collect();
    spec.apply(&mut atoms)
}

/// The same quantity computed from the explicit depth-`H` outcome tree,
/// with branch probabilities taken as ratios of cylinder probabilities.
/// Exponential in `H`; for cross-checking.
pub fn fsc_risk_by_tree(m: &Pomdp, f: &Fsc, spec: &RiskSpec, horizon: usize) -> Result<f64> {
    let chain = build_global_chain(m, f)?;
    let branching = chain.rows.iter().map(|r| r.len()).max().unwrap_or(1).max(1);
    let leaves = (branching as f64).powi(horizon as i32) * chain.len() as f64;
    if leaves > TREE_LEAF_CAP as f64 {
        return Err(Error::TooLarge(format!("outcome tree with up to {leaves:e} leaves")));
    }
    fn grow(chain: &GlobalChain, path: &mut Vec<usize>, remaining: usize) -> OutcomeTree {
        let x = *path.last().expect("non-empty path");
        if remaining == 0 {
            return OutcomeTree::leaf(chain.cost[x]);
        }
        let here = cylinder_probability(chain, path);
        let children = chain.rows[x]
            .iter()
            .map(|&(y, _)| {
                path.push(y);
                let p = cylinder_probability(chain, path) / here;
                let child = grow(chain, path, remaining - 1);
                path.pop();
                (p, child)
            })
            .collect();
        OutcomeTree::node(chain.cost[x], children)
    }
    let mut w = vec![0.0; chain.len()];
    for x in (0..chain.len()).filter(|&x| chain.initial[x] > 0.0) {
        w[x] = nested_risk_eval(spec, &grow(&chain, &mut vec![x], horizon), m.discount())?;
    }
    Ok(root_risk(&chain, spec, &w))
}

/// Minimum nested risk over all deterministic policies that map
/// observation histories to actions, for stages `0..=H`.
///
/// At each stage the agent sees the observation emitted by the current
/// state and acts. The value of a policy subtree is a vector over states;
/// only Pareto-minimal vectors are kept, which is exact because the risk
/// maps are monotone.
pub fn brute_force_optimal_risk(m: &Pomdp, spec: &RiskSpec, horizon: usize) -> Result<f64> {
    spec.validate()?;
    let (ns, na, no) = (m.num_states(), m.num_actions(), m.num_observations());
    let gamma = m.discount();

    // Vectors for the final stage: one action per observation.
    let mut level: Vec<Vec<f64>> = Vec::new();
    let mut choice = vec![0usize; no];
    let check = |count: f64| -> Result<()> {
        if count > POLICY_CAP as f64 {
            return Err(Error::TooLarge(format!("{count:e} candidate policy subtrees")));
        }
        Ok(())
    };
    check((na as f64).powi(no as i32))?;
    loop {
        let w: Vec<f64> = (0..ns)
            .map(|s| (0..no).map(|o| m.observation(s, o) * m.cost(s, choice[o])).sum())
            .collect();
        level.push(w);
        if !advance(&mut choice, na) {
            break;
        }
    }
    level = pareto_minimal(level);

    let mut atoms = Vec::new();
    for _ in 0..horizon {
        let options = na * level.len();
        check((options as f64).powi(no as i32))?;
        let mut next = Vec::new();
        let mut pick = vec![0usize; no];
        loop {
            let w: Vec<f64> = (0..ns)
                .map(|s| {
                    atoms.clear();
                    let mut stage = 0.0;
                    for (o, &k) in pick.iter().enumerate() {
                        let po = m.observation(s, o);
                        if po == 0.0 {
                            continue;
                        }
                        let (a, cont) = (k % na, &level[k / na]);
                        stage += po * m.cost(s, a);
                        for (s2, &t) in m.transition_row(s, a).iter().enumerate() {
                            if t > 0.0 {
                                atoms.push((cont[s2], po * t));
                            }
                        }
                    }
                    stage + gamma * spec.apply(&mut atoms)
                })
                .collect();
            next.push(w);
            if !advance(&mut pick, options) {
                break;
            }
        }
        level = pareto_minimal(next);
    }

    let mut best = f64::INFINITY;
    for w in &level {
        let mut atoms: Vec<(f64, f64)> =
            m.initial().iter().zip(w).filter(|(p, _)| **p > 0.0).map(|(p, v)| (*v, *p)).collect();
        best = best.min(spec.apply(&mut atoms));
    }
    Ok(best)
}

/// Odometer increment; false after the last combination.
fn advance(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

fn pareto_minimal(mut vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    vectors.sort_by(|a, b| a.iter().sum::<f64>().total_cmp(&b.iter().sum::<f64>()));
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let dominated = kept.iter().any(|k| k.iter().zip(&v).all(|(a, b)| a <= b));
        if !dominated {
            kept.push(v);
        }
    }
    kept
}
