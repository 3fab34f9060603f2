mod common;

use riskfsc::eval::evaluate_fsc;
use riskfsc::fsc::build_global_chain;
use riskfsc::oracle::{brute_force_fsc_risk, brute_force_optimal_risk, fsc_risk_by_tree, HorizonBound};
use riskfsc::{Fsc, Pomdp, RiskSpec};

const SPECS: [RiskSpec; 3] = [RiskSpec::Expectation, RiskSpec::Cvar { alpha: 0.3 }, RiskSpec::Cvar { alpha: 0.8 }];

/// Expected cost of the first `h + 1` stages by summing over every path.
fn expectation_by_paths(m: &Pomdp, f: &Fsc, h: usize) -> f64 {
    let chain = build_global_chain(m, f).unwrap();
    fn walk(chain: &riskfsc::GlobalChain, x: usize, p: f64, disc: f64, gamma: f64, left: usize) -> f64 {
        let here = p * disc * chain.cost[x];
        if left == 0 {
            return here;
        }
        here + chain.rows[x].iter().map(|&(y, q)| walk(chain, y, p * q, disc * gamma, gamma, left - 1)).sum::<f64>()
    }
    (0..chain.len())
        .filter(|&x| chain.initial[x] > 0.0)
        .map(|x| walk(&chain, x, chain.initial[x], 1.0, m.discount(), h))
        .sum()
}

#[test]
fn memoized_recursion_matches_explicit_tree() {
    let mut rng = common::rng(1);
    for trial in 0..30 {
        let m = common::random_instance(&mut rng, 3, 2, 2, 0.9);
        let f = common::random_fsc(&mut rng, 2, m.num_actions(), m.num_observations());
        for spec in SPECS {
            for h in 0..=3 {
                let a = brute_force_fsc_risk(&m, &f, &spec, h).unwrap();
                let b = fsc_risk_by_tree(&m, &f, &spec, h).unwrap();
                assert!((a - b).abs() < 1e-10, "trial {trial} {spec} H={h}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn expectation_equals_path_enumeration() {
    let mut rng = common::rng(2);
    for _ in 0..20 {
        let m = common::random_instance(&mut rng, 3, 2, 2, 0.8);
        let f = common::random_fsc(&mut rng, 2, m.num_actions(), m.num_observations());
        for h in 0..=4 {
            let a = brute_force_fsc_risk(&m, &f, &RiskSpec::Expectation, h).unwrap();
            assert!((a - expectation_by_paths(&m, &f, h)).abs() < 1e-10);
        }
    }
}

#[test]
fn truncation_error_within_tail_bound() {
    let mut rng = common::rng(3);
    for _ in 0..20 {
        let m = common::random_instance(&mut rng, 4, 2, 2, 0.7);
        let f = common::random_fsc(&mut rng, 2, m.num_actions(), m.num_observations());
        for spec in SPECS {
            let v = evaluate_fsc(&m, &f, &spec, 1e-12).unwrap();
            let chain = build_global_chain(&m, &f).unwrap();
            let exact = v.risk_at(&chain.initial);
            for h in [2, 5, 10] {
                let bound = HorizonBound::new(h, m.discount(), m.max_cost());
                let approx = brute_force_fsc_risk(&m, &f, &spec, h).unwrap();
                assert!((exact - approx).abs() <= bound.tail + 1e-9);
            }
        }
    }
}

#[test]
fn truncated_risk_grows_with_horizon() {
    let mut rng = common::rng(4);
    for _ in 0..20 {
        let m = common::random_instance(&mut rng, 4, 2, 2, 0.9);
        let f = common::random_fsc(&mut rng, 2, m.num_actions(), m.num_observations());
        for spec in SPECS {
            let mut last = f64::NEG_INFINITY;
            for h in 0..8 {
                let r = brute_force_fsc_risk(&m, &f, &spec, h).unwrap();
                assert!(r >= last - 1e-12);
                last = r;
            }
        }
    }
}

#[test]
fn tail_bound_decreases() {
    let bounds: Vec<f64> = (0..20).map(|h| HorizonBound::new(h, 0.9, 2.0).tail).collect();
    assert!(bounds.windows(2).all(|w| w[1] < w[0]));
    let b = HorizonBound::with_tail_below(0.9, 1.0, 1e-3);
    assert!(b.tail < 1e-3 && HorizonBound::new(b.horizon - 1, 0.9, 1.0).tail >= 1e-3);
}

#[test]
fn optimum_lower_bounds_every_controller() {
    let mut rng = common::rng(5);
    for _ in 0..20 {
        let m = common::random_instance(&mut rng, 3, 2, 2, 0.8);
        for spec in SPECS {
            let best = brute_force_optimal_risk(&m, &spec, 3).unwrap();
            for nodes in 1..=2 {
                let f = common::random_fsc(&mut rng, nodes, m.num_actions(), m.num_observations());
                assert!(best <= brute_force_fsc_risk(&m, &f, &spec, 3).unwrap() + 1e-9);
            }
        }
    }
}

#[test]
fn optimum_of_a_fully_observable_chain_is_the_mdp_value() {
    let mut rng = common::rng(6);
    let mut m = common::random_pomdp(&mut rng, 3, 2, 1, 0.5, 1.0);
    // Identity observations.
    let t: Vec<Vec<Vec<f64>>> = (0..3).map(|s| (0..2).map(|a| m.transition_row(s, a).to_vec()).collect()).collect();
    let c: Vec<Vec<f64>> = (0..3).map(|s| (0..2).map(|a| m.cost(s, a)).collect()).collect();
    let eye: Vec<Vec<f64>> = (0..3).map(|s| (0..3).map(|o| f64::from(u8::from(s == o))).collect()).collect();
    m = Pomdp::from_tables(&t, &eye, &c, &[0.0, 1.0, 0.0], 0.5).unwrap();
    let h = 12;
    let best = brute_force_optimal_risk(&m, &RiskSpec::Expectation, h).unwrap();
    let v = common::mdp_values(&m, 1e-12);
    assert!((best - v[1]).abs() <= HorizonBound::new(h, 0.5, m.max_cost()).tail + 1e-9);
}
