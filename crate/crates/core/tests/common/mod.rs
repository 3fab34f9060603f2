//! Seeded instance generators and independent reference solvers shared by
//! the integration tests.
#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskfsc::{Fsc, Pomdp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector; about a third of the entries are zeroed.
pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.35) { 0.0 } else { rng.random::<f64>() + 0.01 }).collect();
    if w.iter().all(|x| *x == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

pub fn random_pomdp(rng: &mut ChaCha8Rng, ns: usize, na: usize, no: usize, gamma: f64, c_max: f64) -> Pomdp {
    let t: Vec<Vec<Vec<f64>>> = (0..ns).map(|_| (0..na).map(|_| simplex(rng, ns)).collect()).collect();
    let o: Vec<Vec<f64>> = (0..ns).map(|_| simplex(rng, no)).collect();
    let c: Vec<Vec<f64>> = (0..ns).map(|_| (0..na).map(|_| (rng.random::<f64>() * c_max * 100.0).round() / 100.0).collect()).collect();
    let init = simplex(rng, ns);
    Pomdp::from_tables(&t, &o, &c, &init, gamma).expect("random model is valid")
}

/// Random instance with sizes drawn from the given inclusive ranges.
pub fn random_instance(rng: &mut ChaCha8Rng, max_states: usize, max_actions: usize, max_obs: usize, gamma: f64) -> Pomdp {
    let ns = rng.random_range(1..=max_states);
    let na = rng.random_range(1..=max_actions);
    let no = rng.random_range(1..=max_obs);
    random_pomdp(rng, ns, na, no, gamma, 1.0)
}

pub fn random_fsc(rng: &mut ChaCha8Rng, nodes: usize, na: usize, no: usize) -> Fsc {
    let mut f = Fsc::zeros(nodes, na, no);
    for g in 0..nodes {
        for o in 0..no {
            let w = simplex(rng, nodes * na);
            f.row_mut(g, o).copy_from_slice(&w);
        }
    }
    f.set_initial(simplex(rng, nodes));
    f
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Expected discounted cost of the controller from each `(s, g)`, computed
/// from the joint chain by a direct linear solve.
pub fn expectation_by_linear_solve(m: &Pomdp, f: &Fsc) -> Vec<f64> {
    let (ns, ng, na, no) = (m.num_states(), f.num_nodes(), m.num_actions(), m.num_observations());
    let n = ns * ng;
    let gamma = m.discount();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..ns {
        for g in 0..ng {
            let i = s * ng + g;
            a[i][i] += 1.0;
            for o in 0..no {
                let po = m.observation(s, o);
                for g2 in 0..ng {
                    for act in 0..na {
                        let w = po * f.prob(g, o, g2, act);
                        if w == 0.0 {
                            continue;
                        }
                        b[i] += w * m.cost(s, act);
                        for s2 in 0..ns {
                            a[i][s2 * ng + g2] -= gamma * w * m.transition(s, act, s2);
                        }
                    }
                }
            }
        }
    }
    solve_linear(a, b)
}

/// Optimal discounted cost of the fully observable MDP by value iteration.
pub fn mdp_values(m: &Pomdp, tol: f64) -> Vec<f64> {
    let (ns, na, gamma) = (m.num_states(), m.num_actions(), m.discount());
    let mut v = vec![0.0; ns];
    loop {
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| m.cost(s, a) + gamma * (0..ns).map(|s2| m.transition(s, a, s2) * v[s2]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let diff = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        v = next;
        if diff < tol * (1.0 - gamma) / gamma {
            return v;
        }
    }
}

/// CVaR by sorting: the worst `alpha` probability mass, averaged.
pub fn cvar_by_sorting(alpha: f64, atoms: &[(f64, f64)]) -> f64 {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut left = alpha;
    let mut acc = 0.0;
    for (v, p) in sorted {
        let take = p.min(left);
        acc += take * v;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    acc / alpha
}
