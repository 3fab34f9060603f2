mod common;

use proptest::prelude::*;
use riskfsc::eval::{bellman, evaluate_fsc, residual, ValueTable};
use riskfsc::fsc::build_global_chain;
use riskfsc::RiskSpec;

fn spec_strategy() -> impl Strategy<Value = RiskSpec> {
    prop_oneof![Just(RiskSpec::Expectation), (0.05..=1.0f64).prop_map(|alpha| RiskSpec::Cvar { alpha })]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fixed_point_within_tolerance_and_bounds(seed in any::<u64>(), spec in spec_strategy(), nodes in 1..=3usize) {
        let mut rng = common::rng(seed);
        let m = common::random_instance(&mut rng, 5, 3, 3, 0.9);
        let f = common::random_fsc(&mut rng, nodes, m.num_actions(), m.num_observations());
        let v = evaluate_fsc(&m, &f, &spec, 1e-9).unwrap();
        prop_assert!(residual(&m, &f, &spec, &v).unwrap() <= 1e-9);
        let bound = m.max_cost() / (1.0 - m.discount());
        prop_assert!(v.values.iter().all(|x| *x >= -1e-12 && *x <= bound + 1e-9));
    }

    #[test]
    fn bellman_operator_contracts(seed in any::<u64>(), spec in spec_strategy()) {
        let mut rng = common::rng(seed);
        let m = common::random_instance(&mut rng, 5, 3, 3, 0.8);
        let f = common::random_fsc(&mut rng, 2, m.num_actions(), m.num_observations());
        let chain = build_global_chain(&m, &f).unwrap();
        let n = chain.len();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 1.7).sin() * 5.0).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos() * 3.0).collect();
        let (mut tx, mut ty) = (vec![0.0; n], vec![0.0; n]);
        bellman(&chain, &spec, m.discount(), &x, &mut tx);
        bellman(&chain, &spec, m.discount(), &y, &mut ty);
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        prop_assert!(d(&tx, &ty) <= m.discount() * d(&x, &y) + 1e-12);
    }

    #[test]
    fn bellman_operator_is_monotone(seed in any::<u64>(), spec in spec_strategy()) {
        let mut rng = common::rng(seed);
        let m = common::random_instance(&mut rng, 5, 3, 3, 0.8);
        let f = common::random_fsc(&mut rng, 2, m.num_actions(), m.num_observations());
        let chain = build_global_chain(&m, &f).unwrap();
        let n = chain.len();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + (i % 3) as f64).collect();
        let (mut tx, mut ty) = (vec![0.0; n], vec![0.0; n]);
        bellman(&chain, &spec, m.discount(), &x, &mut tx);
        bellman(&chain, &spec, m.discount(), &y, &mut ty);
        prop_assert!(tx.iter().zip(&ty).all(|(a, b)| *a <= b + 1e-12));
    }

    #[test]
    fn expectation_matches_linear_solve(seed in any::<u64>(), nodes in 1..=3usize) {
        let mut rng = common::rng(seed);
        let m = common::random_instance(&mut rng, 6, 3, 3, 0.9);
        let f = common::random_fsc(&mut rng, nodes, m.num_actions(), m.num_observations());
        let v = evaluate_fsc(&m, &f, &RiskSpec::Expectation, 1e-10).unwrap();
        let exact = common::expectation_by_linear_solve(&m, &f);
        for (a, b) in v.values.iter().zip(&exact) {
            prop_assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn cvar_dominates_expectation_and_orders_in_alpha(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let m = common::random_instance(&mut rng, 5, 3, 2, 0.9);
        let f = common::random_fsc(&mut rng, 2, m.num_actions(), m.num_observations());
        let e = evaluate_fsc(&m, &f, &RiskSpec::Expectation, 1e-10).unwrap();
        let mild = evaluate_fsc(&m, &f, &RiskSpec::Cvar { alpha: 0.7 }, 1e-10).unwrap();
        let harsh = evaluate_fsc(&m, &f, &RiskSpec::Cvar { alpha: 0.2 }, 1e-10).unwrap();
        for i in 0..e.values.len() {
            prop_assert!(e.values[i] <= mild.values[i] + 1e-8);
            prop_assert!(mild.values[i] <= harsh.values[i] + 1e-8);
        }
    }
}

#[test]
fn cvar_at_one_equals_expectation() {
    let mut rng = common::rng(5);
    let m = common::random_pomdp(&mut rng, 4, 2, 2, 0.9, 1.0);
    let f = common::random_fsc(&mut rng, 2, 2, 2);
    let e = evaluate_fsc(&m, &f, &RiskSpec::Expectation, 1e-10).unwrap();
    let c = evaluate_fsc(&m, &f, &RiskSpec::Cvar { alpha: 1.0 }, 1e-10).unwrap();
    for (a, b) in e.values.iter().zip(&c.values) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn value_csv_round_trip_and_shape() {
    let mut rng = common::rng(9);
    let m = common::random_pomdp(&mut rng, 4, 2, 2, 0.9, 1.0);
    let f = common::random_fsc(&mut rng, 3, 2, 2);
    let v = evaluate_fsc(&m, &f, &RiskSpec::Expectation, 1e-10).unwrap();
    let mut buf = Vec::new();
    v.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# format: riskfsc-values 1\n"));
    assert_eq!(text.lines().count(), 2 + 4 * 3);
    let back = ValueTable::read_csv(&text, RiskSpec::Expectation, 0.9).unwrap();
    assert_eq!(back.values, v.values);
}
