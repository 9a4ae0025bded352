mod common;

use common::*;
use num_rational::Rational64;
use streamtree::overlay::{check_property1, check_property2, check_property3, is_steady_state, write_snapshot};
use streamtree::simulator::{
    bootstrap_by_arrivals, bootstrap_steady, cycle_ancestors, generate, measure_delay, parse_trace, random_scenario,
    run, write_trace, ChurnEvent, ChurnScenario, Contact, EventKind, RunError, Simulation, Strategy,
};
use streamtree::{NodeId, StreamConfig};

#[test]
fn parses_single_departure_scenario() {
    let sc = ChurnScenario::parse("11 3 1 0 1 3 42 100\n10 depart 4\n").unwrap();
    assert_eq!(sc.config.n_initial, 11);
    assert_eq!(sc.config.m, 3);
    assert_eq!(sc.config.k_block, 1);
    assert_eq!(sc.seed, 42);
    assert_eq!(sc.horizon, 100);
    assert_eq!(sc.events, vec![ChurnEvent { round: 10, kind: EventKind::Depart(vec![NodeId(4)]) }]);
}

#[test]
fn parses_every_event_kind() {
    let text =
        "# comment\n12 3 5/4 1/4 2 6 7 40\ncapacity 2 3/2\n5 depart 4,9\n6 arrive random\n8 arrive 3\n9 allcast 5\n";
    let sc = ChurnScenario::parse(text).unwrap();
    assert_eq!(sc.config.capacity, Rational64::new(5, 4));
    assert_eq!(sc.config.tolerance, Rational64::new(1, 4));
    assert_eq!(sc.capacities[&NodeId(2)], Rational64::new(3, 2));
    assert_eq!(sc.events.len(), 4);
    assert_eq!(sc.events[1].kind, EventKind::Arrive(Contact::Random));
    assert_eq!(sc.events[2].kind, EventKind::Arrive(Contact::Peer(NodeId(3))));
    assert_eq!(ChurnScenario::parse(&sc.serialize()).unwrap(), sc);
}

#[test]
fn rejects_malformed_scenarios() {
    let bad = [
        "11 3 1 0 1 3 42 100\n10 depart 4,9\n",
        "11 3 1 0 3 3 42 100\n10 arrive 2\n10 arrive 3\n",
        "11 3 1 0 3 3 42 100\n10 depart 2\n10 depart 3\n",
        "11 3 1 0 3 3 42 100\n10 depart 2,2\n",
        "11 3 1 0 1 3 42 100\n101 depart 2\n",
        "11 3 1 0 1 3 42 100\n0 depart 2\n",
        "11 3 1 0 1 3 42 100\n20 depart 2\n10 depart 3\n",
        "11 3 1 0 1 3 42 100\n10 explode 2\n",
        "11 3 1 0 1 3 42\n",
        "",
        "11 0 1 0 1 3 42 100\n",
        "11 3 1 2 1 3 42 100\n",
    ];
    for text in bad {
        assert!(ChurnScenario::parse(text).is_err(), "accepted {text:?}");
    }
}

#[test]
fn quiet_run_stays_at_the_fixed_point() {
    let cfg = StreamConfig::new(11, 3);
    let start = bootstrap_steady(&cfg);
    let out = run(&ChurnScenario::quiet(cfg.clone(), 1, 50)).unwrap();
    assert_eq!(write_snapshot(&out.overlay), write_snapshot(&start));
    assert!(out.records.iter().all(|r| r.p1 && r.p2 && r.p3 && r.steady && r.repairs == 0));
    assert!(out.records.iter().all(|r| r.min_rate == cfg.rate() && r.delay == Some(4)));
}

#[test]
fn steady_delay_is_four_at_eleven_peers() {
    let g = bootstrap_steady(&StreamConfig::new(11, 3));
    assert_eq!(measure_delay(&g).overall, Some(4));
    assert_eq!(oracle_delay(&g), Some(4));
}

#[test]
fn measured_delay_matches_search_oracle() {
    for (n, m) in [(1, 1), (5, 2), (11, 3), (30, 4), (64, 3), (100, 5)] {
        let g = bootstrap_steady(&StreamConfig::new(n, m));
        assert_eq!(measure_delay(&g).overall, oracle_delay(&g), "n={n} m={m}");
    }
}

#[test]
fn departure_of_peer_four_relabels_and_resettles() {
    let sc = ChurnScenario::parse("11 3 1 0 1 3 42 100\n10 depart 4\n").unwrap();
    let out = run(&sc).unwrap();
    assert!(out.records.iter().all(|r| r.p1 && r.p2));
    let ten = &out.records[9];
    assert_eq!(ten.event, "depart:4");
    assert!(!out.overlay.contains(NodeId(4)));
    assert_eq!(out.overlay.n(), 10);
    assert!(out.metrics.steady_at_end);
    assert!(is_steady_state(&out.overlay, &sc.config));
    assert!(out.metrics.rounds_to_quiescence.is_some());
}

#[test]
fn runs_are_deterministic() {
    let cfg = StreamConfig::new(30, 3);
    let sc = random_scenario(&cfg, 99, 80);
    let a = run(&sc).unwrap();
    let b = run(&sc).unwrap();
    assert_eq!(write_trace(&a.records), write_trace(&b.records));
    assert_eq!(write_snapshot(&a.overlay), write_snapshot(&b.overlay));
}

#[test]
fn trace_round_trips() {
    let sc = random_scenario(&StreamConfig::new(20, 3), 5, 40);
    let out = run(&sc).unwrap();
    let text = write_trace(&out.records);
    assert_eq!(parse_trace(&text).unwrap(), out.records);
    assert!(parse_trace("round=x").is_err());
}

#[test]
fn generated_scenarios_respect_block_size() {
    let cfg = StreamConfig::new(25, 3);
    for strategy in [Strategy::Random, Strategy::RootDepartures, Strategy::ArrivalBursts, Strategy::MidPipeline] {
        let sc = generate(&cfg, 3, 60, strategy);
        assert!(!sc.events.is_empty(), "{}", strategy.name());
        for e in &sc.events {
            if let EventKind::Depart(ids) = &e.kind {
                assert_eq!(ids.len(), 1, "{}", strategy.name());
            }
        }
        assert_eq!(ChurnScenario::parse(&sc.serialize()).unwrap(), sc);
    }
}

#[test]
fn zero_rounds_generate_nothing() {
    let sc = random_scenario(&StreamConfig::new(20, 3), 1, 0);
    assert!(sc.events.is_empty());
    assert!(run(&sc).unwrap().records.is_empty());
}

#[test]
fn ancestor_blocks_are_cycle_connected() {
    let cfg = StreamConfig::new(30, 3).with_block(3);
    let g = bootstrap_steady(&cfg);
    let block = cycle_ancestors(&g, 0, NodeId(20), 3);
    assert_eq!(block.len(), 3);
    assert!(!block.contains(&NodeId(20)));
    let mut sim = Simulation::new(cfg, g, 1);
    sim.step(&[ChurnEvent { round: 1, kind: EventKind::Depart(block) }]).unwrap();
    assert!(check_property1(&sim.overlay).iter().all(|r| r.holds));
    assert!(check_property2(&sim.overlay).is_empty());
}

#[test]
fn departure_of_unknown_peer_is_rejected() {
    let cfg = StreamConfig::new(11, 3);
    let mut sim = Simulation::new(cfg.clone(), bootstrap_steady(&cfg), 1);
    let res = sim.step(&[ChurnEvent { round: 1, kind: EventKind::Depart(vec![NodeId(40)]) }]);
    assert!(matches!(res, Err(RunError::InvalidEvent { .. })));
}

#[test]
fn two_arrivals_build_a_chain() {
    let boot = bootstrap_by_arrivals(&StreamConfig::new(2, 3), 1).unwrap();
    let g = boot.overlay;
    for i in 0..3 {
        assert_eq!(g.roots[i].len(), 1);
        let root = g.roots[i][0];
        let other = *g.peers.keys().find(|&&p| p != root).unwrap();
        assert_eq!(g.view(root, i).child_primary, Some(other));
        assert!(g.view(other, i).is_leaf());
    }
}

#[test]
fn arrivals_converge_to_a_balanced_overlay() {
    let cfg = StreamConfig::new(50, 4);
    let boot = bootstrap_by_arrivals(&cfg, 11).unwrap();
    assert!(boot.quiescence.is_some());
    assert!(check_property3(&boot.overlay, &cfg).is_empty());
    assert!(boot.records.iter().all(|r| r.p1 && r.p2));
}
