mod common;

use common::*;
use num_rational::Rational64;
use proptest::prelude::*;
use streamtree::bounds::{
    brute_force_min_depth, delay_bound_tolerance, delay_upper_bound, depth_lower_bound, BoundQuery, DegreeProfile, Grid,
};
use streamtree::extensions::allcast_coverage_check;
use streamtree::overlay::{
    canonical_labels, check_consistency, check_property1, check_property2, check_property3, parse_snapshot,
    write_snapshot,
};
use streamtree::simulator::{
    bootstrap_steady, measure_delay, parse_trace, random_scenario, run, ChurnScenario, Simulation,
};
use streamtree::{NodeId, StreamConfig};

fn small_config() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=5).prop_flat_map(|m| ((2 * m + 1)..=80usize, Just(m)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scenario_text_round_trips(n in 10usize..60, seed in any::<u64>(), rounds in 0u64..80) {
        let sc = random_scenario(&StreamConfig::new(n, 3), seed, rounds);
        prop_assert_eq!(ChurnScenario::parse(&sc.serialize()).unwrap(), sc);
    }

    #[test]
    fn labels_are_a_permutation((n, m) in small_config()) {
        let g = bootstrap_steady(&StreamConfig::new(n, m));
        for i in 0..m {
            let mut labels: Vec<u32> = g.peers.keys().map(|&p| g.label(p, i)).collect();
            labels.sort_unstable();
            prop_assert_eq!(labels, (1..=n as u32).collect::<Vec<_>>());
            prop_assert_eq!(canonical_labels(&g, i).unwrap(), preorder_labels(&g, i));
        }
    }

    #[test]
    fn checkers_do_not_mutate((n, m) in small_config()) {
        let cfg = StreamConfig::new(n, m);
        let g = bootstrap_steady(&cfg);
        let before = write_snapshot(&g);
        let a = (check_property2(&g), check_property3(&g, &cfg));
        let b = (check_property2(&g), check_property3(&g, &cfg));
        prop_assert_eq!(a, b);
        prop_assert_eq!(write_snapshot(&g), before);
    }

    #[test]
    fn steady_states_are_consistent_fixed_points((n, m) in small_config()) {
        let cfg = StreamConfig::new(n, m);
        let g = bootstrap_steady(&cfg);
        prop_assert!(check_consistency(&g).is_empty());
        prop_assert!(check_property3(&g, &cfg).is_empty());
        let before = write_snapshot(&g);
        let mut sim = Simulation::new(cfg, g, 0);
        for _ in 0..3 {
            sim.step(&[]).unwrap();
        }
        prop_assert_eq!(write_snapshot(&sim.overlay), before);
    }

    #[test]
    fn measured_delay_matches_search((n, m) in small_config()) {
        let g = bootstrap_steady(&StreamConfig::new(n, m));
        prop_assert_eq!(measure_delay(&g).overall, oracle_delay(&g));
    }

    #[test]
    fn snapshots_round_trip((n, m) in small_config()) {
        let g = bootstrap_steady(&StreamConfig::new(n, m));
        let text = write_snapshot(&g);
        prop_assert_eq!(write_snapshot(&parse_snapshot(&text).unwrap()), text);
    }

    #[test]
    fn depth_bound_is_dominated(leaves in 1u64..6, ones in 0u64..5) {
        let counts = [leaves, ones, leaves - 1];
        let p = DegreeProfile::from_counts(&counts);
        let lb = depth_lower_bound(&p).unwrap();
        let best = brute_force_min_depth(&p).unwrap().depth as f64;
        prop_assert!(lb <= best + 1e-9);
    }

    #[test]
    fn tolerance_lowers_the_delay_bound(n in 1u64..5000, m in 1i64..8, a in 0i64..=8, b in 0i64..=8) {
        let (lo, hi) = (a.min(b), a.max(b));
        let mut q = BoundQuery::new(n, Rational64::new(m, m + 1));
        let base = delay_upper_bound(&q).unwrap();
        q.tolerance = Rational64::new(lo, 8);
        let at_lo = delay_bound_tolerance(&q).unwrap();
        q.tolerance = Rational64::new(hi, 8);
        let at_hi = delay_bound_tolerance(&q).unwrap();
        prop_assert!(at_hi <= at_lo + 1e-12);
        if lo == 0 {
            prop_assert!((at_lo - base).abs() < 1e-12);
        }
    }

    #[test]
    fn allcast_covers_steady_states(n in 4usize..60, source in 1u32..60) {
        let g = bootstrap_steady(&StreamConfig::new(n, 3));
        let s = NodeId(1 + (source - 1) % n as u32);
        prop_assert!(allcast_coverage_check(&g, s).covered);
    }

    #[test]
    fn grid_parser_never_panics(text in ".{0,64}") {
        let _ = Grid::parse(&text);
    }

    #[test]
    fn grid_parser_handles_key_soup(text in "(n|R|tau|delta|x)=[0-9/:,.-]{0,12}(;(n|R|tau|delta)=[0-9/:,.-]{0,8}){0,3}") {
        let _ = Grid::parse(&text);
    }

    #[test]
    fn scenario_parser_never_panics(text in "[0-9 a-z,/#\n.-]{0,80}") {
        let _ = ChurnScenario::parse(&text);
    }

    #[test]
    fn trace_parser_never_panics(text in "[0-9a-z=:, /+\n.-]{0,80}") {
        let _ = parse_trace(&text);
    }

    #[test]
    fn snapshot_parser_never_panics(text in "[0-9a-zS# =:,>\n-]{0,80}") {
        let _ = parse_snapshot(&text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn churn_keeps_connectivity_and_structure(n in 10usize..50, seed in any::<u64>()) {
        let out = run(&random_scenario(&StreamConfig::new(n, 3), seed, 60)).unwrap();
        for r in &out.records {
            prop_assert!(r.p1 && r.p2, "{}", r);
        }
        prop_assert!(check_property1(&out.overlay).iter().all(|r| r.holds));
        prop_assert!(check_consistency(&out.overlay).is_empty());
    }
}
