mod support;

use lvclear::clearance::RowKind;
use lvclear::{assemble, clear, verify, ClearanceProblem, ClearanceStatus, Trade};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use support::*;

fn instance(seed: u64, buses: usize, trades: usize) -> ClearanceProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = radial_network(&mut rng, buses);
    let trades = random_trades(&mut rng, &net, trades, 12.0);
    ClearanceProblem::new(net, trades).unwrap()
}

fn scaled(problem: &ClearanceProblem, k: f64) -> ClearanceProblem {
    let trades = problem
        .trades()
        .iter()
        .map(|t| Trade {
            quantity: t.quantity * k,
            ..t.clone()
        })
        .collect();
    ClearanceProblem::new(problem.network().clone(), trades).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_solutions_verify(seed in any::<u64>(), buses in 3usize..30, trades in 1usize..15) {
        let problem = instance(seed, buses, trades);
        let sol = clear(&problem).unwrap();
        prop_assert_eq!(sol.status, ClearanceStatus::Optimal);
        prop_assert!(verify(&problem, &sol).is_empty());
        prop_assert!(sol.executed_volume <= problem.proposed_volume() + 1e-9);
        prop_assert!(sol.execution.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn scaling_quantities_never_loses_volume(seed in any::<u64>(), buses in 3usize..20, k in 1.0f64..200.0) {
        let problem = instance(seed, buses, 6);
        let base = clear(&problem).unwrap();
        let big = clear(&scaled(&problem, k)).unwrap();
        prop_assert!(verify(&scaled(&problem, k), &big).is_empty());
        prop_assert!(big.executed_volume >= base.executed_volume - 1e-7);
    }

    #[test]
    fn dropping_a_trade_never_gains_volume(seed in any::<u64>(), buses in 3usize..20) {
        let problem = instance(seed, buses, 5);
        let all = clear(&problem).unwrap();
        let fewer = ClearanceProblem::new(problem.network().clone(), problem.trades()[1..].to_vec()).unwrap();
        prop_assert!(clear(&fewer).unwrap().executed_volume <= all.executed_volume + 1e-7);
    }

    #[test]
    fn two_trade_grid_agreement(seed in any::<u64>(), buses in 3usize..10) {
        let problem = instance(seed, buses, 2);
        let sol = clear(&problem).unwrap();
        let grid = grid_search(problem.network(), problem.trades(), 0.01);
        prop_assert!(sol.executed_volume >= grid - 1e-6);
        prop_assert!(sol.executed_volume - grid <= 0.02 * problem.proposed_volume());
    }
}

#[test]
fn row_layout_per_line_and_bus() {
    let problem = instance(7, 12, 4);
    let a = assemble(&problem).unwrap();
    let lines = problem.network().lines().len();
    let buses = problem.network().non_reference_buses().count();
    assert_eq!(a.count_rows(|r| matches!(r, RowKind::FlowUpper(_) | RowKind::FlowLower(_))), 2 * lines);
    assert_eq!(a.count_rows(|r| matches!(r, RowKind::AngleUpper(_) | RowKind::AngleLower(_))), 2 * lines);
    assert_eq!(a.count_rows(|r| matches!(r, RowKind::Balance(_))), buses);
    assert_eq!(a.count_rows(|r| matches!(r, RowKind::SlackDefinition)), 1);
    assert_eq!(a.lp.num_vars(), problem.trades().len() + buses + 1);
}

#[test]
fn generous_limits_execute_everything() {
    let net = generous(&lv10());
    let trades = vec![
        Trade::new("a", 3, 9, 5.0),
        Trade::new("b", 7, 6, 2.5),
        Trade::new("c", 8, 1, 0.75),
    ];
    let problem = ClearanceProblem::new(net, trades).unwrap();
    let sol = clear(&problem).unwrap();
    assert_eq!(sol.execution, vec![1.0, 1.0, 1.0]);
    assert!((sol.executed_volume - 8.25).abs() < 1e-12);
}

#[test]
fn extreme_trades_on_lv10_curtail() {
    let trades = vec![Trade::new("a", 7, 9, 100.0), Trade::new("b", 5, 4, 100.0)];
    let problem = ClearanceProblem::new(lv10(), trades).unwrap();
    let sol = clear(&problem).unwrap();
    assert!(verify(&problem, &sol).is_empty());
    // generation upper bound of 4 kW at each seller binds first
    for x in &sol.execution {
        assert!((x - 0.04).abs() < 1e-9, "{x}");
    }
}
