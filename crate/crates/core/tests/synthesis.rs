mod common;

use riskfsc::bpi::{default_initial_fsc, run_bpi, BpiConfig};
use riskfsc::escape::{add_istates, dp_backup, forward_beliefs};
use riskfsc::eval::{belief_value, evaluate_fsc};
use riskfsc::improve::{improve_istate, tangent_beliefs, EPSILON_THRESHOLD};
use riskfsc::pomdp::belief_update;
use riskfsc::{Belief, Fsc, RiskSpec};

const SPECS: [RiskSpec; 3] = [RiskSpec::Expectation, RiskSpec::Cvar { alpha: 0.2 }, RiskSpec::Cvar { alpha: 0.6 }];

#[test]
fn accepted_improvements_never_raise_values() {
    let mut rng = common::rng(11);
    let mut accepted = 0;
    for _ in 0..40 {
        let m = common::random_instance(&mut rng, 4, 3, 2, 0.9);
        let f = common::random_fsc(&mut rng, 2, m.num_actions(), m.num_observations());
        for spec in SPECS {
            let v = evaluate_fsc(&m, &f, &spec, 1e-10).unwrap();
            for g in 0..f.num_nodes() {
                let r = improve_istate(&m, &f, g, &v, &spec).unwrap();
                for row in &r.rows {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    assert!(row.iter().all(|w| *w >= -1e-12));
                }
                if !r.improved() {
                    continue;
                }
                accepted += 1;
                let mut next = f.clone();
                r.apply(&mut next);
                let w = evaluate_fsc(&m, &next, &spec, 1e-10).unwrap();
                for (new, old) in w.values.iter().zip(&v.values) {
                    assert!(*new <= old + 1e-6, "{spec}: {new} > {old}");
                }
                // The node's own values drop by at least ε wherever ω matters.
                for s in 0..m.num_states() {
                    if !r.excluded[s] {
                        assert!(w.get(s, g) <= v.get(s, g) - r.epsilon + 1e-6);
                    }
                }
            }
        }
    }
    assert!(accepted > 20, "only {accepted} improvements exercised");
}

#[test]
fn tangent_beliefs_lie_on_the_simplex() {
    let mut rng = common::rng(12);
    for _ in 0..20 {
        let m = common::random_instance(&mut rng, 4, 2, 2, 0.9);
        for spec in SPECS {
            let cfg = BpiConfig::new(spec, 0.9, 1, 0);
            let (f, v, _) = run_bpi(&m, &default_initial_fsc(&m, 1, 0).unwrap(), &cfg).unwrap();
            let r = improve_istate(&m, &f, 0, &v, &spec).unwrap();
            assert!(r.epsilon <= EPSILON_THRESHOLD);
            for b in tangent_beliefs(&r).unwrap() {
                assert!((b.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(b.probs().iter().all(|p| *p >= 0.0));
            }
        }
    }
}

#[test]
fn forwarded_beliefs_are_bayes_updates() {
    let mut rng = common::rng(13);
    for _ in 0..30 {
        let m = common::random_instance(&mut rng, 4, 3, 3, 0.9);
        let b = Belief::new(common::simplex(&mut rng, m.num_states())).unwrap();
        let fwd = forward_beliefs(&m, &b);
        assert!(fwd.len() <= m.num_actions() * m.num_observations());
        for x in &fwd {
            let matched = (0..m.num_actions()).any(|a| {
                (0..m.num_observations()).any(|o| belief_update(&m, &b, a, o).is_ok_and(|y| y.l1_distance(x) < 1e-9))
            });
            assert!(matched);
        }
    }
}

#[test]
fn escape_nodes_are_deterministic_and_bounded() {
    let mut rng = common::rng(14);
    let mut grown = 0;
    for _ in 0..30 {
        let m = common::random_instance(&mut rng, 4, 3, 2, 0.9);
        let f = common::random_fsc(&mut rng, 1, m.num_actions(), m.num_observations());
        for spec in SPECS {
            let v = evaluate_fsc(&m, &f, &spec, 1e-10).unwrap();
            let tangents: Vec<Belief> = (0..m.num_states()).map(|s| Belief::point(m.num_states(), s)).collect();
            for n_new in 0..=2 {
                let (out, report) = add_istates(&m, &f, &v, &spec, &tangents, n_new);
                assert!(report.n_added() <= n_new);
                assert_eq!(out.num_nodes(), 1 + report.n_added());
                for added in &report.added {
                    for o in 0..m.num_observations() {
                        let row = out.row(added.node, o);
                        assert_eq!(row.iter().filter(|w| **w == 1.0).count(), 1);
                        assert_eq!(out.prob(added.node, o, added.successor, added.action), 1.0);
                    }
                }
                for c in &report.examined {
                    let b = Belief::new(c.belief.clone()).unwrap();
                    assert!((c.incumbent - belief_value(&v, &b).value).abs() < 1e-12);
                    assert!((c.backup - dp_backup(&m, &v, &b, &spec).value).abs() < 1e-12);
                }
                grown += report.n_added();
            }
        }
    }
    assert!(grown > 0);
}

#[test]
fn backup_never_exceeds_incumbent_at_a_fixed_point() {
    // For the evaluated controller, backing up at any belief cannot be worse
    // than the best node, because every node is one candidate policy.
    let mut rng = common::rng(15);
    for _ in 0..20 {
        let m = common::random_instance(&mut rng, 3, 2, 1, 0.9);
        let mut f = Fsc::zeros(1, m.num_actions(), 1);
        f.set_deterministic(0, 0, 0, 0);
        let v = evaluate_fsc(&m, &f, &RiskSpec::Expectation, 1e-12).unwrap();
        let b = Belief::new(common::simplex(&mut rng, m.num_states())).unwrap();
        assert!(dp_backup(&m, &v, &b, &RiskSpec::Expectation).value <= belief_value(&v, &b).value + 1e-9);
    }
}

#[test]
fn bpi_objective_is_monotone() {
    let mut rng = common::rng(16);
    for _ in 0..15 {
        let m = common::random_instance(&mut rng, 4, 3, 2, 0.9);
        for spec in SPECS {
            let cfg = BpiConfig::new(spec, 0.9, 3, 1);
            let (f, v, trace) = run_bpi(&m, &default_initial_fsc(&m, 1, 0).unwrap(), &cfg).unwrap();
            let obj = trace.objectives();
            assert!(obj.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{spec}: {obj:?}");
            assert!(trace.iterations.len() <= cfg.max_iterations);
            assert!(f.num_nodes() <= 3);
            for it in &trace.iterations {
                if let Some(inc) = it.max_increase {
                    assert!(inc <= 1e-6);
                }
            }
            assert!((trace.final_objective - v.objective(m.initial())).abs() < 1e-12);
            f.validate().unwrap();
        }
    }
}

#[test]
fn bpi_is_deterministic() {
    let mut rng = common::rng(17);
    let m = common::random_instance(&mut rng, 4, 3, 2, 0.9);
    let cfg = BpiConfig::new(RiskSpec::Cvar { alpha: 0.3 }, 0.9, 3, 1);
    let f0 = default_initial_fsc(&m, 1, 0).unwrap();
    let (a, _, ta) = run_bpi(&m, &f0, &cfg).unwrap();
    let (b, _, tb) = run_bpi(&m, &f0, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(ta.to_json(), tb.to_json());
}
