//! Escaping local minima by growing the controller.
//!
//! When no node can be improved, the tangent beliefs are pushed one step
//! forward and the risk Bellman backup is evaluated there. Wherever the
//! backup beats the controller's value, a deterministic node playing the
//! backup's action and handing over to its best successor node is appended.

use serde::Serialize;

use crate::eval::{belief_value, ValueTable};
use crate::fsc::Fsc;
use crate::pomdp::{belief_successors, predict, Belief, Pomdp};
use crate::risk::{cvar_closed_form, RiskSpec};

const DEDUP_TOL: f64 = 1e-9;
/// Minimum backup gain for a new node.
pub const BACKUP_THRESHOLD: f64 = 1e-7;

/// Every one-step successor belief of `b`, over all actions and possible
/// observations, without near-duplicates.
pub fn forward_beliefs(m: &Pomdp, b: &Belief) -> Vec<Belief> {
    let mut out: Vec<Belief> = Vec::new();
    for a in 0..m.num_actions() {
        for succ in belief_successors(m, b, a) {
            if !out.iter().any(|x| x.l1_distance(&succ.belief) <= DEDUP_TOL) {
                out.push(succ.belief);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backup {
    pub value: f64,
    pub action: usize,
    /// Successor node for a deterministic node realizing the backup.
    pub node: usize,
}

/// `min_a c(b,a) + γ R{ V*(b_{o,a}) with probability p(o|b,a) }`.
pub fn dp_backup(m: &Pomdp, v: &ValueTable, b: &Belief, spec: &RiskSpec) -> Backup {
    let gamma = m.discount();
    let mut best: Option<Backup> = None;
    for a in 0..m.num_actions() {
        let stage: f64 = b.probs().iter().enumerate().map(|(s, p)| p * m.cost(s, a)).sum();
        let succ = belief_successors(m, b, a);
        let values: Vec<_> = succ.iter().map(|x| belief_value(v, &x.belief)).collect();
        let mut atoms: Vec<(f64, f64)> = succ.iter().zip(&values).map(|(x, bv)| (bv.value, x.probability)).collect();
        let (risk, node) = match *spec {
            RiskSpec::Expectation => {
                let risk = spec.apply(&mut atoms);
                // Every observation leads to the same node, so pick the one
                // that is best against the predicted state distribution.
                let pred = predict(m, b, a);
                let node = belief_value(v, &Belief::normalized(pred).expect("predicted law sums to one")).argmin;
                (risk, node)
            }
            RiskSpec::Cvar { alpha } => {
                let point = cvar_closed_form(alpha, &mut atoms);
                let critical = values.iter().position(|bv| bv.value == point.threshold).unwrap_or(0);
                (point.value, values.get(critical).map_or(0, |bv| bv.argmin))
            }
        };
        let value = stage + gamma * risk;
        if best.is_none_or(|x| value < x.value) {
            best = Some(Backup { value, action: a, node });
        }
    }
    best.expect("model has at least one action")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeCandidate {
    pub belief: Vec<f64>,
    pub backup: f64,
    pub incumbent: f64,
    pub action: usize,
    pub successor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AddedNode {
    pub node: usize,
    pub action: usize,
    pub successor: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EscapeReport {
    pub examined: Vec<EscapeCandidate>,
    pub added: Vec<AddedNode>,
}

impl EscapeReport {
    pub fn n_added(&self) -> usize {
        self.added.len()
    }
}

/// Appends up to `n_new` deterministic nodes at forwarded tangent beliefs
/// where the backup improves on the controller. The largest gains go first.
pub fn add_istates(
    m: &Pomdp,
    f: &Fsc,
    v: &ValueTable,
    spec: &RiskSpec,
    tangents: &[Belief],
    n_new: usize,
) -> (Fsc, EscapeReport) {
    let mut pool: Vec<Belief> = Vec::new();
    for b in tangents {
        for x in forward_beliefs(m, b) {
            if !pool.iter().any(|y| y.l1_distance(&x) <= DEDUP_TOL) {
                pool.push(x);
            }
        }
    }
    let mut report = EscapeReport::default();
    for b in &pool {
        let backup = dp_backup(m, v, b, spec);
        report.examined.push(EscapeCandidate {
            belief: b.probs().to_vec(),
            backup: backup.value,
            incumbent: belief_value(v, b).value,
            action: backup.action,
            successor: backup.node,
        });
    }
    let mut order: Vec<usize> = (0..report.examined.len())
        .filter(|&i| report.examined[i].backup < report.examined[i].incumbent - BACKUP_THRESHOLD)
        .collect();
    let gain = |i: usize| report.examined[i].incumbent - report.examined[i].backup;
    order.sort_by(|&i, &j| gain(j).total_cmp(&gain(i)).then(i.cmp(&j)));

    let mut out = f.clone();
    for i in order {
        if report.added.len() >= n_new {
            break;
        }
        let c = &report.examined[i];
        if report.added.iter().any(|n| n.action == c.action && n.successor == c.successor) {
            continue;
        }
        let node = out.add_node();
        for o in 0..out.num_observations() {
            out.set_deterministic(node, o, c.successor, c.action);
        }
        report.added.push(AddedNode { node, action: c.action, successor: c.successor });
    }
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::belief_update;
    use approx::assert_abs_diff_eq;

    fn zero_table(ns: usize, ng: usize) -> ValueTable {
        ValueTable {
            num_states: ns,
            num_nodes: ng,
            values: vec![0.0; ns * ng],
            spec: RiskSpec::Expectation,
            gamma: 0.9,
            iterations: 0,
            residual: 0.0,
        }
    }

    fn noisy() -> Pomdp {
        Pomdp::from_tables(
            &[vec![vec![0.9, 0.1], vec![0.2, 0.8]], vec![vec![0.3, 0.7], vec![0.5, 0.5]]],
            &[vec![0.75, 0.25], vec![0.1, 0.9]],
            &[vec![1.0, 3.0], vec![2.0, 0.5]],
            &[0.5, 0.5],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn identity_forwarding() {
        let m = Pomdp::from_tables(&[vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]], &[vec![1.0], vec![1.0]], &[vec![1.0], vec![1.0]], &[0.5, 0.5], 0.9).unwrap();
        let b = Belief::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(forward_beliefs(&m, &b), vec![b]);
    }

    #[test]
    fn forwarded_beliefs_match_bayes_updates() {
        let m = noisy();
        let b = Belief::new(vec![0.4, 0.6]).unwrap();
        let fw = forward_beliefs(&m, &b);
        assert!(fw.len() <= 4);
        for a in 0..2 {
            for o in 0..2 {
                let x = belief_update(&m, &b, a, o).unwrap();
                assert!(fw.iter().any(|y| y.l1_distance(&x) <= 1e-12));
            }
        }
    }

    #[test]
    fn impossible_observation_is_dropped() {
        let mut m = noisy();
        for s in 0..2 {
            m.set_observation(s, 0, 1.0);
            m.set_observation(s, 1, 0.0);
        }
        let fw = forward_beliefs(&m, &Belief::uniform(2));
        assert_eq!(fw.len(), 2);
    }

    #[test]
    fn zero_values_give_cheapest_action() {
        let m = noisy();
        let b = Belief::new(vec![0.4, 0.6]).unwrap();
        let bu = dp_backup(&m, &zero_table(2, 1), &b, &RiskSpec::Expectation);
        // c(b, a0) = 1.6, c(b, a1) = 1.5
        assert_abs_diff_eq!(bu.value, 1.5, epsilon = 1e-12);
        assert_eq!(bu.action, 1);
    }

    #[test]
    fn expectation_backup_by_hand() {
        let m = noisy();
        let v = ValueTable { values: vec![4.0, 6.0, 5.0, 1.0], ..zero_table(2, 2) };
        let b = Belief::new(vec![0.4, 0.6]).unwrap();
        let mut best = f64::INFINITY;
        for a in 0..2 {
            let mut total: f64 = (0..2).map(|s| b.probs()[s] * m.cost(s, a)).sum();
            for o in 0..2 {
                let x = belief_update(&m, &b, a, o).unwrap();
                let p: f64 = (0..2).map(|s2| crate::pomdp::predict(&m, &b, a)[s2] * m.observation(s2, o)).sum();
                let vb = (0..2).map(|g| x.dot(&v.column(g))).fold(f64::INFINITY, f64::min);
                total += 0.9 * p * vb;
            }
            best = best.min(total);
        }
        assert_abs_diff_eq!(dp_backup(&m, &v, &b, &RiskSpec::Expectation).value, best, epsilon = 1e-12);
    }

    #[test]
    fn zero_budget_is_a_no_op() {
        let m = noisy();
        let f = Fsc::uniform(1, 2, 2);
        let (g, report) = add_istates(&m, &f, &zero_table(2, 1), &RiskSpec::Expectation, &[Belief::uniform(2)], 0);
        assert_eq!(g, f);
        assert_eq!(report.n_added(), 0);
    }
}
