//! Node improvement: the linear program that searches for a new kernel row
//! block `ω(·,·|g,·)` lowering node `g`'s value by `ε` at every state at once.
//!
//! Values are costs, so an improvement means `backup(ω) + ε ≤ V(·, g)`.
//! Under expectation the backup is linear in ω and the program is exact.
//! Under CVaR the backup `c + γ inf_z { z + E[(V−z)_+]/α }` is concave in ω;
//! for each state the infimum is pinned at the incumbent's minimizing atom
//! `z*`, which gives a linear majorant that touches the backup at the
//! current ω. Any ε found this way is a guaranteed improvement, and the
//! current rows stay feasible at ε = 0.
//!
//! A single ε stalls as soon as one state admits no improvement, even when
//! others do. When that happens, an optional second program maximizes the
//! summed per-state slack `Σ_s ε_s` subject to no state getting worse. Any
//! such change is still a monotone improvement of the node's values.

use crate::error::{Error, Result};
use crate::eval::ValueTable;
use crate::fsc::Fsc;
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation, Sense};
use crate::pomdp::{Belief, Pomdp};
use crate::risk::{cvar_closed_form, RiskSpec};

/// Improvements at or below this are solver noise; the node is tangent.
pub const EPSILON_THRESHOLD: f64 = 1e-7;
const TIGHT_TOL: f64 = 1e-7;
const FLAT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementResult {
    pub node: usize,
    pub epsilon: f64,
    /// New `ω(·,·|node, o)` per observation, indexed `g' * |A| + a`.
    pub rows: Vec<Vec<f64>>,
    /// Per-state dual of the improvement constraints.
    pub duals: Vec<f64>,
    /// States whose improvement constraint is tight at the optimum.
    pub tight: Vec<bool>,
    /// States whose constraint could not depend on ω and were left out.
    pub excluded: Vec<bool>,
    /// Largest single-state improvement of the returned rows.
    pub gain: f64,
    /// The rows come from the per-state program (ε itself is tangent).
    pub per_state: bool,
    pub status: LpStatus,
}

impl ImprovementResult {
    pub fn improved(&self) -> bool {
        self.epsilon > EPSILON_THRESHOLD || self.per_state
    }

    /// Writes the new rows into `f`.
    pub fn apply(&self, f: &mut Fsc) {
        for (o, row) in self.rows.iter().enumerate() {
            f.row_mut(self.node, o).copy_from_slice(row);
        }
    }
}

/// Coefficients `q(g', a)` such that the backup term equals `Σ_o O(o|s) Σ ω q`.
fn coefficients(m: &Pomdp, v: &ValueTable, s: usize, z: Option<(f64, f64)>) -> Vec<f64> {
    let (ng, na) = (v.num_nodes, m.num_actions());
    let gamma = m.discount();
    let mut q = vec![0.0; ng * na];
    for g2 in 0..ng {
        for a in 0..na {
            let mut cont = 0.0;
            for (s2, &t) in m.transition_row(s, a).iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                cont += t * match z {
                    None => v.get(s2, g2),
                    Some((z, _)) => (v.get(s2, g2) - z).max(0.0),
                };
            }
            q[g2 * na + a] = m.cost(s, a)
                + match z {
                    None => gamma * cont,
                    Some((_, alpha)) => gamma / alpha * cont,
                };
        }
    }
    q
}

/// Successor law of global states from `[s, ·]` when the node's rows are `block`.
fn successor_law(m: &Pomdp, ng: usize, s: usize, block: &[f64]) -> Vec<f64> {
    let na = m.num_actions();
    let width = ng * na;
    let mut mass = vec![0.0; m.num_states() * ng];
    for o in 0..m.num_observations() {
        let po = m.observation(s, o);
        if po == 0.0 {
            continue;
        }
        for (i, &w) in block[o * width..(o + 1) * width].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (s2, &t) in m.transition_row(s, i % na).iter().enumerate() {
                mass[s2 * ng + i / na] += po * w * t;
            }
        }
    }
    mass
}

/// CVaR threshold of the successor values at `s` under `block`.
fn threshold(m: &Pomdp, v: &ValueTable, s: usize, block: &[f64], alpha: f64) -> f64 {
    let mass = successor_law(m, v.num_nodes, s, block);
    let mut atoms: Vec<(f64, f64)> =
        mass.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(j, p)| (v.values[j], *p)).collect();
    cvar_closed_form(alpha, &mut atoms).threshold
}

/// Exact backup at `[s, ·]` when the node's rows are `block`.
fn backup(m: &Pomdp, v: &ValueTable, s: usize, block: &[f64], spec: &RiskSpec) -> f64 {
    let na = m.num_actions();
    let width = v.num_nodes * na;
    let mut stage = 0.0;
    for o in 0..m.num_observations() {
        let po = m.observation(s, o);
        for (i, &w) in block[o * width..(o + 1) * width].iter().enumerate() {
            stage += po * w * m.cost(s, i % na);
        }
    }
    let mass = successor_law(m, v.num_nodes, s, block);
    let mut atoms: Vec<(f64, f64)> =
        mass.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(j, p)| (v.values[j], *p)).collect();
    stage + m.discount() * spec.apply(&mut atoms)
}

fn expand(m: &Pomdp, s: usize, q: &[f64]) -> Vec<f64> {
    let mut coef = Vec::with_capacity(m.num_observations() * q.len());
    for o in 0..m.num_observations() {
        let po = m.observation(s, o);
        coef.extend(q.iter().map(|x| po * x));
    }
    coef
}

fn current_row_block(f: &Fsc, g: usize) -> Vec<f64> {
    (0..f.num_observations()).flat_map(|o| f.row(g, o).iter().copied()).collect()
}

/// A block choosing `(g', a)` = `k` under every observation.
fn pure_block(no: usize, width: usize, k: usize) -> Vec<f64> {
    let mut block = vec![0.0; no * width];
    for o in 0..no {
        block[o * width + k] = 1.0;
    }
    block
}

fn is_flat(q: &[f64]) -> bool {
    let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    hi - lo <= FLAT_TOL * (1.0 + hi.abs())
}

/// True when no choice of the node's rows can change its backup at `s`:
/// every `(g', a)` yields the same cost and the same law of successor values.
fn invariant(m: &Pomdp, v: &ValueTable, s: usize, spec: &RiskSpec) -> bool {
    match spec {
        RiskSpec::Expectation => is_flat(&coefficients(m, v, s, None)),
        RiskSpec::Cvar { .. } => {
            let (ng, na) = (v.num_nodes, m.num_actions());
            let law = |k: usize| {
                let mut atoms: Vec<(f64, f64)> = Vec::new();
                for (s2, &t) in m.transition_row(s, k % na).iter().enumerate() {
                    if t > 0.0 {
                        atoms.push((v.get(s2, k / na), t));
                    }
                }
                atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
                atoms
            };
            let same = |a: &[(f64, f64)], b: &[(f64, f64)]| {
                let tol = |x: f64| FLAT_TOL * (1.0 + x.abs());
                // Compare cumulative distribution functions at every atom.
                let cdf = |atoms: &[(f64, f64)], x: f64| atoms.iter().filter(|p| p.0 <= x + tol(x)).map(|p| p.1).sum::<f64>();
                a.iter().chain(b).all(|&(x, _)| (cdf(a, x) - cdf(b, x)).abs() <= 1e-12)
            };
            let first = law(0);
            (1..ng * na).all(|k| (m.cost(s, k % na) - m.cost(s, 0)).abs() <= FLAT_TOL && same(&first, &law(k)))
        }
    }
}

struct Solved {
    epsilon: f64,
    block: Vec<f64>,
    duals: Vec<f64>,
    tight: Vec<bool>,
}

/// Maximizes ε under one linearization: state `s` uses threshold `zs[s]`
/// (ignored for expectation). `None` when the linearization admits no ε ≥ 0.
/// With `per_state`, every active state gets its own slack and the program
/// maximizes their sum; ε is then reported as zero.
#[allow(clippy::too_many_arguments)]
fn solve_profile(
    m: &Pomdp,
    v: &ValueTable,
    spec: &RiskSpec,
    active: &[usize],
    incumbent: &[f64],
    zs: &[f64],
    width: usize,
    old_block: &[f64],
    per_state: bool,
) -> Result<Option<Solved>> {
    let (ns, no) = (m.num_states(), m.num_observations());
    let slacks = if per_state { active.len() } else { 1 };
    let nvars = slacks + no * width;
    let mut objective = vec![0.0; nvars];
    objective[..slacks].iter_mut().for_each(|x| *x = 1.0);
    let mut lp = LinearProgram::new(Sense::Maximize, objective);
    let mut rows = Vec::with_capacity(active.len());
    for (k, &s) in active.iter().enumerate() {
        let (q, shift) = match *spec {
            RiskSpec::Expectation => (coefficients(m, v, s, None), 0.0),
            RiskSpec::Cvar { alpha } => (coefficients(m, v, s, Some((zs[s], alpha))), m.discount() * zs[s]),
        };
        // ε + shift + coef·ω ≤ incumbent
        let coef = expand(m, s, &q);
        let mut row = vec![0.0; slacks];
        row[if per_state { k } else { 0 }] = 1.0;
        row.extend_from_slice(&coef);
        lp.add_row(row, Relation::Le, incumbent[s] - shift);
        rows.push((s, coef, incumbent[s] - shift));
    }
    for o in 0..no {
        let mut row = vec![0.0; nvars];
        row[slacks + o * width..slacks + (o + 1) * width].iter_mut().for_each(|x| *x = 1.0);
        lp.add_row(row, Relation::Eq, 1.0);
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(None),
        LpStatus::Unbounded => return Err(Error::ContractViolation("improvement program is unbounded".into())),
    }
    let observed: Vec<bool> = (0..no).map(|o| (0..ns).any(|s| m.observation(s, o) > 0.0)).collect();
    let mut block = Vec::with_capacity(no * width);
    for o in 0..no {
        if !observed[o] {
            block.extend_from_slice(&old_block[o * width..(o + 1) * width]);
            continue;
        }
        let mut row: Vec<f64> =
            sol.primal[slacks + o * width..slacks + (o + 1) * width].iter().map(|w| w.max(0.0)).collect();
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= total);
        block.extend(row);
    }
    let mut duals = vec![0.0; ns];
    let mut tight = vec![false; ns];
    for (k, (s, coef, rhs)) in rows.iter().enumerate() {
        duals[*s] += sol.duals[k].max(0.0);
        let slack = sol.primal[if per_state { k } else { 0 }];
        let lhs = slack + coef.iter().zip(&sol.primal[slacks..]).map(|(a, w)| a * w).sum::<f64>();
        if rhs - lhs <= TIGHT_TOL {
            tight[*s] = true;
        }
    }
    let epsilon = if per_state { 0.0 } else { sol.primal[0].max(0.0) };
    Ok(Some(Solved { epsilon, block, duals, tight }))
}

/// Largest ε the rows `block` actually achieve against the incumbent.
fn achieved(m: &Pomdp, v: &ValueTable, spec: &RiskSpec, active: &[usize], incumbent: &[f64], block: &[f64]) -> f64 {
    active.iter().map(|&s| incumbent[s] - backup(m, v, s, block, spec)).fold(f64::INFINITY, f64::min)
}

/// Per-state improvements of `block`: `(smallest, largest, sum)`.
fn gains(m: &Pomdp, v: &ValueTable, spec: &RiskSpec, active: &[usize], incumbent: &[f64], block: &[f64]) -> (f64, f64, f64) {
    active.iter().map(|&s| incumbent[s] - backup(m, v, s, block, spec)).fold(
        (f64::INFINITY, f64::NEG_INFINITY, 0.0),
        |(lo, hi, sum), d| (lo.min(d), hi.max(d), sum + d),
    )
}

/// Worsening below this (relative to the value scale) counts as none.
const NO_WORSE_TOL: f64 = 1e-10;

/// Solves the improvement program for node `g` against the values `v` of
/// `f`, falling back to per-state slack when ε is tangent.
pub fn improve_istate(m: &Pomdp, f: &Fsc, g: usize, v: &ValueTable, spec: &RiskSpec) -> Result<ImprovementResult> {
    improve_istate_with(m, f, g, v, spec, true)
}

/// Solves the improvement program for node `g` against the values `v` of `f`.
///
/// For CVaR the program is solved under several linearizations (the
/// incumbent's thresholds and the thresholds of each pure choice of
/// `(g', a)`), and the best is refined by re-linearizing at its solution.
/// Every candidate is sound; ε reports the improvement the returned rows
/// actually achieve. With `per_state_fallback`, a tangent ε triggers the
/// per-state program; the duals and tight set still describe the ε program.
pub fn improve_istate_with(
    m: &Pomdp,
    f: &Fsc,
    g: usize,
    v: &ValueTable,
    spec: &RiskSpec,
    per_state_fallback: bool,
) -> Result<ImprovementResult> {
    f.check_compatible(m)?;
    if g >= f.num_nodes() {
        return Err(Error::DimensionMismatch(format!("node {g} out of range for {} nodes", f.num_nodes())));
    }
    if v.num_states != m.num_states() || v.num_nodes != f.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "value table is {}x{}, controller needs {}x{}",
            v.num_states,
            v.num_nodes,
            m.num_states(),
            f.num_nodes()
        )));
    }
    let (ns, no) = (m.num_states(), m.num_observations());
    let width = f.num_nodes() * m.num_actions();
    let current = current_row_block(f, g);

    // The incumbent is the exact backup under the current rows, so
    // (ε = 0, current ω) is feasible under the incumbent linearization.
    let incumbent: Vec<f64> = (0..ns).map(|s| backup(m, v, s, &current, spec)).collect();
    let excluded: Vec<bool> = (0..ns).map(|s| invariant(m, v, s, spec)).collect();
    let active: Vec<usize> = (0..ns).filter(|&s| !excluded[s]).collect();

    if active.is_empty() {
        // Nothing the node does can matter.
        return Ok(ImprovementResult {
            node: g,
            epsilon: 0.0,
            rows: (0..no).map(|o| f.row(g, o).to_vec()).collect(),
            duals: vec![0.0; ns],
            tight: vec![false; ns],
            excluded,
            gain: 0.0,
            per_state: false,
            status: LpStatus::Optimal,
        });
    }

    let thresholds = |block: &[f64]| -> Vec<f64> {
        match *spec {
            RiskSpec::Expectation => vec![0.0; ns],
            RiskSpec::Cvar { alpha } => (0..ns).map(|s| threshold(m, v, s, block, alpha)).collect(),
        }
    };
    let base = solve_profile(m, v, spec, &active, &incumbent, &thresholds(&current), width, &current, false)?
        .ok_or_else(|| {
            Error::ContractViolation(format!(
                "improvement program for node {g} is infeasible although the current controller is a witness"
            ))
        })?;

    let mut best_block = base.block.clone();
    let mut best = achieved(m, v, spec, &active, &incumbent, &best_block).max(0.0);
    if matches!(spec, RiskSpec::Cvar { .. }) {
        for k in 0..width {
            let zs = thresholds(&pure_block(no, width, k));
            if let Some(sol) = solve_profile(m, v, spec, &active, &incumbent, &zs, width, &current, false)? {
                let eps = achieved(m, v, spec, &active, &incumbent, &sol.block);
                if eps > best {
                    best = eps;
                    best_block = sol.block;
                }
            }
        }
        for _ in 0..8 {
            let Some(sol) =
                solve_profile(m, v, spec, &active, &incumbent, &thresholds(&best_block), width, &current, false)?
            else {
                break;
            };
            let eps = achieved(m, v, spec, &active, &incumbent, &sol.block);
            if eps <= best + 1e-12 {
                break;
            }
            best = eps;
            best_block = sol.block;
        }
    }

    let improved = best > EPSILON_THRESHOLD;
    let mut per_state = false;
    let block = if improved {
        best_block
    } else if let Some(block) = per_state_fallback
        .then(|| per_state_rows(m, v, spec, &active, &incumbent, width, &current, &thresholds))
        .transpose()?
        .flatten()
    {
        per_state = true;
        block
    } else {
        base.block.clone()
    };
    let gain = gains(m, v, spec, &active, &incumbent, &block).1.max(0.0);
    Ok(ImprovementResult {
        node: g,
        epsilon: if improved { best } else { base.epsilon.min(best) },
        rows: (0..no).map(|o| block[o * width..(o + 1) * width].to_vec()).collect(),
        duals: base.duals,
        tight: base.tight,
        excluded,
        gain,
        per_state,
        status: LpStatus::Optimal,
    })
}

/// Rows that lower some state by more than the threshold while no state
/// gets worse, maximizing the summed improvement over the same
/// linearizations as the ε program. `None` when there are none.
#[allow(clippy::too_many_arguments)]
fn per_state_rows(
    m: &Pomdp,
    v: &ValueTable,
    spec: &RiskSpec,
    active: &[usize],
    incumbent: &[f64],
    width: usize,
    current: &[f64],
    thresholds: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<Option<Vec<f64>>> {
    let no = m.num_observations();
    let scale = 1.0 + incumbent.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    // Sound candidates only: no state may get worse under the exact backup.
    let score = |block: &[f64]| -> Option<f64> {
        let (lo, hi, sum) = gains(m, v, spec, active, incumbent, block);
        (lo >= -NO_WORSE_TOL * scale && hi > EPSILON_THRESHOLD).then_some(sum)
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |block: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
        if let Some(sum) = score(&block) {
            if best.as_ref().is_none_or(|(b, _)| sum > *b) {
                *best = Some((sum, block));
            }
        }
    };
    let mut profiles = vec![thresholds(current)];
    if matches!(spec, RiskSpec::Cvar { .. }) {
        profiles.extend((0..width).map(|k| thresholds(&pure_block(no, width, k))));
    }
    for zs in profiles {
        if let Some(sol) = solve_profile(m, v, spec, active, incumbent, &zs, width, current, true)? {
            consider(sol.block, &mut best);
        }
    }
    if matches!(spec, RiskSpec::Cvar { .. }) {
        for _ in 0..8 {
            let Some((sum, block)) = best.clone() else { break };
            let Some(sol) = solve_profile(m, v, spec, active, incumbent, &thresholds(&block), width, current, true)?
            else {
                break;
            };
            consider(sol.block, &mut best);
            if best.as_ref().is_none_or(|(b, _)| *b <= sum + 1e-12) {
                break;
            }
        }
    }
    Ok(best.map(|(_, block)| block))
}

/// Beliefs at which the node's value touches its backup, read off the duals.
///
/// All-zero duals (a degenerate basis) fall back to the uniform belief over
/// tight states, then over all constrained states.
pub fn tangent_beliefs(result: &ImprovementResult) -> Result<Vec<Belief>> {
    if result.improved() {
        return Err(Error::ContractViolation(format!(
            "tangent beliefs requested for node {} which improves by {:e}",
            result.node, result.gain
        )));
    }
    let total: f64 = result.duals.iter().sum();
    if total > 0.0 {
        return Ok(vec![Belief::new(result.duals.iter().map(|d| d / total).collect())
            .expect("normalized duals form a belief")]);
    }
    let pick = |mask: Vec<bool>| -> Option<Belief> {
        let count = mask.iter().filter(|b| **b).count();
        (count > 0).then(|| {
            Belief::new(mask.iter().map(|b| if *b { 1.0 / count as f64 } else { 0.0 }).collect())
                .expect("uniform over a subset is a belief")
        })
    };
    let n = result.duals.len();
    Ok(vec![pick(result.tight.clone())
        .or_else(|| pick(result.excluded.iter().map(|e| !e).collect()))
        .unwrap_or_else(|| Belief::uniform(n))])
}

/// The node with the best expected value under the initial distribution; ties go low.
pub fn init_istate(v: &ValueTable, initial: &[f64]) -> usize {
    let mut best = (v.dot(initial, 0), 0);
    for g in 1..v.num_nodes {
        let x = v.dot(initial, g);
        if x < best.0 {
            best = (x, g);
        }
    }
    best.1
}
