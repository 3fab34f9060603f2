//! Stochastic finite-state controllers and the global Markov chain they
//! induce on a POMDP.
//!
//! A controller in internal state `g` that sees observation `o` draws a
//! successor node and an action jointly from `ω(g', a | g, o)`. Closing the
//! loop with a POMDP yields a Markov chain over pairs `[s, g]`:
//!
//! ```text
//! T([s',g'] | [s,g]) = Σ_o Σ_a O(o|s) ω(g',a|g,o) T(s'|s,a)
//! c([s,g])           = Σ_a p(a|g,s) c(s,a),   p(a|g,s) = Σ_{g',o} ω(g',a|g,o) O(o|s)
//! ```
//!
//! Global state `[s, g]` has index `s * |G| + g`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pomdp::Pomdp;

const ROW_TOL: f64 = 1e-12;
pub const FSC_FORMAT: &str = "riskfsc-fsc";
pub const FSC_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Fsc {
    nodes: usize,
    actions: usize,
    observations: usize,
    /// `[g][o][g'][a]`
    kernel: Vec<f64>,
    initial: Vec<f64>,
}

impl Fsc {
    /// A controller with all-zero kernel rows and `κ` on node 0.
    pub fn zeros(nodes: usize, actions: usize, observations: usize) -> Self {
        let mut initial = vec![0.0; nodes];
        if nodes > 0 {
            initial[0] = 1.0;
        }
        Self { nodes, actions, observations, kernel: vec![0.0; nodes * observations * nodes * actions], initial }
    }

    /// Every row uniform over `(g', a)`; `κ` on node 0.
    pub fn uniform(nodes: usize, actions: usize, observations: usize) -> Self {
        let mut f = Self::zeros(nodes, actions, observations);
        let p = 1.0 / (nodes * actions) as f64;
        f.kernel.iter_mut().for_each(|w| *w = p);
        f
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn num_observations(&self) -> usize {
        self.observations
    }

    fn row_index(&self, g: usize, o: usize) -> usize {
        (g * self.observations + o) * self.nodes * self.actions
    }

    /// `ω(·,· | g, o)` as a slice indexed by `g' * |A| + a`.
    pub fn row(&self, g: usize, o: usize) -> &[f64] {
        let i = self.row_index(g, o);
        &self.kernel[i..i + self.nodes * self.actions]
    }

    pub fn row_mut(&mut self, g: usize, o: usize) -> &mut [f64] {
        let i = self.row_index(g, o);
        let w = self.nodes * self.actions;
        &mut self.kernel[i..i + w]
    }

    pub fn prob(&self, g: usize, o: usize, next: usize, a: usize) -> f64 {
        self.row(g, o)[next * self.actions + a]
    }

    pub fn set_prob(&mut self, g: usize, o: usize, next: usize, a: usize, p: f64) {
        let na = self.actions;
        self.row_mut(g, o)[next * na + a] = p;
    }

    /// Makes `(g, o)` choose `(next, a)` with certainty.
    pub fn set_deterministic(&mut self, g: usize, o: usize, next: usize, a: usize) {
        let na = self.actions;
        let row = self.row_mut(g, o);
        row.iter_mut().for_each(|w| *w = 0.0);
        row[next * na + a] = 1.0;
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn set_initial(&mut self, initial: Vec<f64>) {
        assert_eq!(initial.len(), self.nodes);
        self.initial = initial;
    }

    /// Points `κ` at a single node.
    pub fn set_initial_node(&mut self, g: usize) {
        self.initial = vec![0.0; self.nodes];
        self.initial[g] = 1.0;
    }

    /// Appends a node with all-zero rows; existing rows gain zero columns for it.
    pub fn add_node(&mut self) -> usize {
        let old = self.clone();
        self.nodes += 1;
        self.kernel = vec![0.0; self.nodes * self.observations * self.nodes * self.actions];
        for g in 0..old.nodes {
            for o in 0..old.observations {
                for next in 0..old.nodes {
                    for a in 0..old.actions {
                        self.set_prob(g, o, next, a, old.prob(g, o, next, a));
                    }
                }
            }
        }
        self.initial.push(0.0);
        self.nodes - 1
    }

    /// Action marginal of node `g` in state `s`: `Σ_{g',o} ω(g',a|g,o) O(o|s)`.
    pub fn action_marginal(&self, m: &Pomdp, g: usize, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.actions];
        for o in 0..self.observations {
            let po = m.observation(s, o);
            if po == 0.0 {
                continue;
            }
            for (i, w) in self.row(g, o).iter().enumerate() {
                out[i % self.actions] += po * w;
            }
        }
        out
    }

    /// Lists every broken invariant: rows on the simplex, `κ` a distribution.
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.actions == 0 || self.observations == 0 {
            return Err(Error::InvalidInput("controller needs nodes, actions and observations".into()));
        }
        for g in 0..self.nodes {
            for o in 0..self.observations {
                let row = self.row(g, o);
                if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidInput(format!("ω(.|{g},{o}) has a negative entry")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_TOL {
                    return Err(Error::InvalidInput(format!("ω(.|{g},{o}) sums to {total}")));
                }
            }
        }
        let total: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidInput(format!("κ sums to {total}")));
        }
        Ok(())
    }

    pub fn check_compatible(&self, m: &Pomdp) -> Result<()> {
        if self.actions != m.num_actions() || self.observations != m.num_observations() {
            return Err(Error::DimensionMismatch(format!(
                "controller has {} actions / {} observations, model has {} / {}",
                self.actions,
                self.observations,
                m.num_actions(),
                m.num_observations()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = FscDocument {
            format: FSC_FORMAT.into(),
            version: FSC_FORMAT_VERSION,
            nodes: self.nodes,
            actions: self.actions,
            observations: self.observations,
            initial: self.initial.clone(),
            rows: (0..self.nodes)
                .flat_map(|g| (0..self.observations).map(move |o| (g, o)))
                .map(|(g, o)| RowDocument {
                    node: g,
                    observation: o,
                    entries: self
                        .row(g, o)
                        .iter()
                        .enumerate()
                        .filter(|(_, w)| **w != 0.0)
                        .map(|(i, w)| EntryDocument { next: i / self.actions, action: i % self.actions, prob: *w })
                        .collect(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("controller serializes");
        text.push('\n');
        text
    }

    /// Parses a controller document. Indices out of range are reported as
    /// semantic errors; rows must lie on the simplex.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FscDocument = serde_json::from_str(text)?;
        if doc.format != FSC_FORMAT || doc.version != FSC_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported controller format {} v{}", doc.format, doc.version)));
        }
        let semantic = |message: String| Error::Semantic { location: "controller".into(), message };
        if doc.initial.len() != doc.nodes {
            return Err(semantic(format!("initial has {} entries for {} nodes", doc.initial.len(), doc.nodes)));
        }
        let mut f = Fsc::zeros(doc.nodes, doc.actions, doc.observations);
        f.initial = doc.initial;
        for row in doc.rows {
            if row.node >= doc.nodes || row.observation >= doc.observations {
                return Err(semantic(format!("row ({}, {}) out of range", row.node, row.observation)));
            }
            for e in row.entries {
                if e.next >= doc.nodes {
                    return Err(semantic(format!("unknown successor node {}", e.next)));
                }
                if e.action >= doc.actions {
                    return Err(semantic(format!("unknown action {}", e.action)));
                }
                f.set_prob(row.node, row.observation, e.next, e.action, e.prob);
            }
        }
        f.validate()?;
        Ok(f)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FscDocument {
    format: String,
    version: u32,
    nodes: usize,
    actions: usize,
    observations: usize,
    initial: Vec<f64>,
    rows: Vec<RowDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowDocument {
    node: usize,
    observation: usize,
    entries: Vec<EntryDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDocument {
    next: usize,
    action: usize,
    prob: f64,
}

/// Markov chain over `S × G` with sparse transition rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalChain {
    pub num_states: usize,
    pub num_nodes: usize,
    /// Sparse rows `(successor index, probability)`, successors ascending.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub initial: Vec<f64>,
    pub cost: Vec<f64>,
}

impl GlobalChain {
    pub fn len(&self) -> usize {
        self.num_states * self.num_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, s: usize, g: usize) -> usize {
        s * self.num_nodes + g
    }

    pub fn split(&self, i: usize) -> (usize, usize) {
        (i / self.num_nodes, i % self.num_nodes)
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.rows[from].binary_search_by_key(&to, |e| e.0).map_or(0.0, |k| self.rows[from][k].1)
    }
}

/// Closes the loop between `m` and `f`.
pub fn build_global_chain(m: &Pomdp, f: &Fsc) -> Result<GlobalChain> {
    f.check_compatible(m)?;
    let (ns, ng, na) = (m.num_states(), f.num_nodes(), m.num_actions());
    let mut rows = Vec::with_capacity(ns * ng);
    let mut cost = Vec::with_capacity(ns * ng);
    let mut dense = vec![0.0; ns * ng];
    for s in 0..ns {
        for g in 0..ng {
            dense.iter_mut().for_each(|x| *x = 0.0);
            for o in 0..m.num_observations() {
                let po = m.observation(s, o);
                if po == 0.0 {
                    continue;
                }
                for (i, &w) in f.row(g, o).iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let (next, a) = (i / na, i % na);
                    let weight = po * w;
                    for (s2, &t) in m.transition_row(s, a).iter().enumerate() {
                        if t != 0.0 {
                            dense[s2 * ng + next] += weight * t;
                        }
                    }
                }
            }
            rows.push(dense.iter().enumerate().filter(|(_, p)| **p != 0.0).map(|(j, p)| (j, *p)).collect());
            let marginal = f.action_marginal(m, g, s);
            cost.push(marginal.iter().enumerate().map(|(a, p)| p * m.cost(s, a)).sum());
        }
    }
    let initial = (0..ns)
        .flat_map(|s| (0..ng).map(move |g| (s, g)))
        .map(|(s, g)| m.initial()[s] * f.initial()[g])
        .collect();
    Ok(GlobalChain { num_states: ns, num_nodes: ng, rows, initial, cost })
}

/// Probability of the cylinder set of paths starting with `path`.
pub fn cylinder_probability(chain: &GlobalChain, path: &[usize]) -> f64 {
    let Some((&first, rest)) = path.split_first() else {
        return 0.0;
    };
    let mut p = chain.initial[first];
    let mut prev = first;
    for &x in rest {
        if p == 0.0 {
            return 0.0;
        }
        p *= chain.transition(prev, x);
        prev = x;
    }
    p
}
