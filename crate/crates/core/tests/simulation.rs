mod common;

use riskfsc::eval::evaluate_fsc;
use riskfsc::fsc::build_global_chain;
use riskfsc::pomdp::{make_gridworld, GridWorldSpec};
use riskfsc::sim::{empirical_cvar, empirical_mean, rollout, run_scenarios, Outcome};
use riskfsc::{Fsc, RiskSpec};

const NE: usize = 1;

fn always(f: &mut Fsc, a: usize) {
    for o in 0..f.num_observations() {
        f.set_deterministic(0, o, 0, a);
    }
}

#[test]
fn rollout_average_matches_expected_value() {
    let mut rng = common::rng(5);
    for _ in 0..3 {
        let m = common::random_instance(&mut rng, 4, 2, 2, 0.8);
        let f = common::random_fsc(&mut rng, 2, m.num_actions(), m.num_observations());
        let v = evaluate_fsc(&m, &f, &RiskSpec::Expectation, 1e-10).unwrap();
        // Rollouts draw the start node from κ, so compare against the full initial law.
        let chain = build_global_chain(&m, &f).unwrap();
        let exact = v.risk_at(&chain.initial);
        let n = 10_000;
        let costs: Vec<f64> = (0..n).map(|i| rollout(&m, &f, i, 120).discounted_cost).collect();
        let mean = empirical_mean(&costs);
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - exact).abs() < 5.0 * se + 1e-6, "mean {mean} exact {exact} se {se}");
    }
}

#[test]
fn rollouts_are_reproducible() {
    let mut rng = common::rng(6);
    let m = common::random_instance(&mut rng, 4, 3, 2, 0.9);
    let f = common::random_fsc(&mut rng, 3, m.num_actions(), m.num_observations());
    assert_eq!(rollout(&m, &f, 42, 50), rollout(&m, &f, 42, 50));
    let spec = GridWorldSpec::new(6, 6, vec![(2, 2), (3, 4)], (0, 5));
    let g = make_gridworld(&spec).unwrap();
    let u = Fsc::uniform(1, g.num_actions(), g.num_observations());
    let a = run_scenarios(&spec, &u, 30, 0.3, 9, 100).unwrap();
    assert_eq!(a, run_scenarios(&spec, &u, 30, 0.3, 9, 100).unwrap());
    // Scenario i does not depend on how many follow it.
    let short = run_scenarios(&spec, &u, 10, 0.3, 9, 100).unwrap();
    assert_eq!(short.scenarios[..], a.scenarios[..10]);
}

#[test]
fn unperturbed_open_map_never_crashes() {
    let mut spec = GridWorldSpec::new(5, 5, vec![], (0, 4));
    spec.delta = 0.0;
    spec.start = Some((4, 0));
    let m = make_gridworld(&spec).unwrap();
    let mut f = Fsc::zeros(1, m.num_actions(), m.num_observations());
    always(&mut f, NE);
    let report = run_scenarios(&spec, &f, 100, 0.0, 3, 50).unwrap();
    assert_eq!(report.failures, 0);
    assert_eq!(report.successes, 100);
    assert!(report.scenarios.iter().all(|r| r.steps == 4 && r.outcome == Outcome::Goal));
}

#[test]
fn heading_off_the_map_crashes() {
    let mut spec = GridWorldSpec::new(4, 4, vec![(0, 1)], (3, 3));
    spec.delta = 0.0;
    spec.start = Some((1, 1));
    let m = make_gridworld(&spec).unwrap();
    let mut f = Fsc::zeros(1, m.num_actions(), m.num_observations());
    always(&mut f, 0);
    let report = run_scenarios(&spec, &f, 20, 0.0, 1, 50).unwrap();
    assert_eq!(report.failures, 20);
}

#[test]
fn empirical_cvar_matches_sorting() {
    let mut rng = common::rng(8);
    for n in [1usize, 7, 100] {
        let xs: Vec<f64> = (0..n).map(|_| common::simplex(&mut rng, 3)[0] * 10.0).collect();
        for alpha in [0.05, 0.1, 0.5, 1.0] {
            let atoms: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 1.0 / n as f64)).collect();
            let want = common::cvar_by_sorting(alpha, &atoms);
            assert!((empirical_cvar(&xs, alpha) - want).abs() < 1e-9);
        }
    }
}

#[test]
fn scenario_csv_has_one_row_per_scenario() {
    let spec = GridWorldSpec::new(5, 5, vec![(1, 1)], (0, 4));
    let g = make_gridworld(&spec).unwrap();
    let u = Fsc::uniform(1, g.num_actions(), g.num_observations());
    let report = run_scenarios(&spec, &u, 100, 0.2, 0, 60).unwrap();
    assert_eq!(report.failures + report.successes + report.timeouts, 100);
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# format: riskfsc-scenarios 1\n"));
    assert_eq!(text.lines().count(), 102);
}
