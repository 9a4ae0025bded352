//! One line per acceptance criterion, then a single assertion over all of them.

mod common;

use common::oracle_delay;
use num_rational::Rational64;
use std::collections::BTreeSet;
use std::time::Instant;
use streamtree::bounds::{
    allcast_delay_bound, brute_force_min_depth, converse_feasibility_check, delay_bound_tolerance,
    delay_lower_bound_converse, delay_upper_bound, depth_lower_bound, realizable_profiles, supported_rate_tolerance,
    BoundQuery,
};
use streamtree::extensions::{
    allcast_coverage_check, allcast_route, cluster_assign, end_links, multi_source_bootstrap, multi_source_with_sizes,
    rebalance_until_quiet, structural_edges, subtree_sizes, EndLink,
};
use streamtree::overlay::{check_property1, check_property2, check_property3, is_steady_state};
use streamtree::simulator::{
    adversarial_suite, bootstrap_by_arrivals, bootstrap_steady, cycle_ancestors, measure_delay, random_scenario, run,
    write_trace, ChurnEvent, ChurnScenario, EventKind, Simulation,
};
use streamtree::suite::{keep_one_balanced, rounds_to_balance, single_departure, tree_profiles};
use streamtree::{GlobalOverlay, NodeId, StreamConfig};

const SLACK: f64 = 1e-9;
const BOUND_EQ: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rate(m: usize) -> Rational64 {
    Rational64::new(m as i64, m as i64 + 1)
}

fn connected_and_structured(g: &GlobalOverlay) -> bool {
    check_property1(g).iter().all(|r| r.holds) && check_property2(g).is_empty()
}

fn grid() -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for n in [4usize, 11, 12, 50, 200, 1023] {
        for m in [2usize, 3, 4] {
            if n + 1 >= 2 * (m + 1) {
                out.push((n, m));
            }
        }
    }
    out
}

fn steady_sandwich() -> Outcome {
    let mut bad = Vec::new();
    let points = grid();
    for &(n, m) in &points {
        let cfg = StreamConfig::new(n, m);
        let g = bootstrap_steady(&cfg);
        let d = measure_delay(&g).overall;
        let upper = delay_upper_bound(&BoundQuery::new(n as u64, rate(m))).unwrap();
        if !check_property3(&g, &cfg).is_empty()
            || d != oracle_delay(&g)
            || !d.is_some_and(|d| d as f64 <= upper + SLACK)
        {
            bad.push(format!("n={n} m={m} D={d:?} upper={upper:.3}"));
        }
    }
    outcome(bad.is_empty(), format!("{} grid points, failures {bad:?}", points.len()))
}

fn converse_consistency() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for (n, m) in grid() {
        let q = BoundQuery::new(n as u64, rate(m));
        let Ok(lower) = delay_lower_bound_converse(&q) else { continue };
        checked += 1;
        let d = measure_delay(&bootstrap_steady(&StreamConfig::new(n, m))).overall.unwrap_or(u32::MAX);
        if (d as f64) + SLACK < lower {
            bad.push(format!("n={n} m={m}: {d} < {lower:.3}"));
        }
    }
    let q = BoundQuery::new(11, rate(3));
    let lower = delay_lower_bound_converse(&q).unwrap();
    let upper = delay_upper_bound(&q).unwrap();
    let example = (lower - 2.374).abs() < 1e-3 && (upper - 5.585).abs() < 1e-3;
    outcome(
        bad.is_empty() && example,
        format!("{checked} points, n=11: {lower:.3} <= 4 <= {upper:.3}, failures {bad:?}"),
    )
}

fn churn_k1() -> Outcome {
    let mut failures = Vec::new();
    let mut departures = 0;
    let mut deficit_checks = 0;
    for s in 0..200u64 {
        let n = 10 + ((s * 37) % 91) as usize;
        let cfg = StreamConfig::new(n, 3);
        let sc = random_scenario(&cfg, s, 100);
        let out = match run(&sc) {
            Ok(o) => o,
            Err(e) => {
                failures.push(format!("seed {s}: {e}"));
                continue;
            }
        };
        for (k, r) in out.records.iter().enumerate() {
            if !(r.p1 && r.p2) {
                failures.push(format!("seed {s} round {}: p1={} p2={}", r.round, r.p1, r.p2));
            }
            if r.event.contains("depart") {
                departures += 1;
            }
            if r.event != "none" {
                if let Some(next) = out.records.get(k + 1).filter(|x| x.event == "none") {
                    deficit_checks += 1;
                    if next.min_rate != cfg.rate() {
                        failures.push(format!("seed {s} round {}: deficit persists ({})", next.round, next.min_rate));
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "200 scenarios, {departures} departure rounds, {deficit_checks} recovery checks, failures {:?}",
            &failures[..failures.len().min(3)]
        ),
    )
}

/// Peers whose cycle predecessor and every remembered ancestor are in `dead`.
fn expected_reentries(g: &GlobalOverlay, cfg: &StreamConfig, dead: &BTreeSet<NodeId>) -> usize {
    let depth = cfg.ancestors_per_substream();
    let mut count = 0;
    for i in 0..g.m {
        let order: Vec<NodeId> = g.shapes(i).unwrap().into_iter().flat_map(|s| s.order).collect();
        for (k, p) in order.iter().enumerate() {
            if dead.contains(p) {
                continue;
            }
            let chain = (1..=depth + 1).map(|d| k.checked_sub(d).map(|j| order[j]));
            let lost = chain.take_while(|a| a.is_some()).flatten().collect::<Vec<_>>();
            let reaches_server = k < depth + 1;
            if !reaches_server && lost.iter().all(|a| dead.contains(a)) {
                count += 1;
            }
        }
    }
    count
}

fn step_counting(sim: &mut Simulation, events: &[ChurnEvent]) -> Result<(usize, usize, bool), String> {
    let dead: BTreeSet<NodeId> = events
        .iter()
        .filter_map(|e| if let EventKind::Depart(ids) = &e.kind { Some(ids.clone()) } else { None })
        .flatten()
        .collect();
    let expected = expected_reentries(&sim.overlay, &sim.config, &dead);
    let rec = sim.step(events).map_err(|e| e.to_string())?;
    Ok((expected, rec.reentries, rec.p1 && rec.p2))
}

fn churn_k3() -> Outcome {
    let cfg = StreamConfig::new(30, 3).with_block(3);
    let mut scenarios = 0;
    let mut failures = Vec::new();
    let (mut expected, mut observed) = (0, 0);
    for seed in 0..10u64 {
        for sc in adversarial_suite(&cfg, seed, 100) {
            scenarios += 1;
            let mut sim = Simulation::from_scenario(&sc).unwrap();
            for round in 1..=sc.horizon {
                match step_counting(&mut sim, &sc.events_at(round)) {
                    Ok((e, o, ok)) => {
                        expected += e;
                        observed += o;
                        if !ok {
                            failures.push(format!("seed {seed} round {round}: property breach"));
                        }
                    }
                    Err(e) => {
                        failures.push(format!("seed {seed}: {e}"));
                        break;
                    }
                }
            }
        }
    }
    let constructed = forced_reentry();
    let pass = failures.is_empty() && expected == observed && constructed.0 == constructed.1 && constructed.1 > 0;
    outcome(
        pass,
        format!(
            "{scenarios} scenarios, re-entries {observed} (oracle {expected}); oversized block: {} (oracle {}), failures {:?}",
            constructed.1,
            constructed.0,
            &failures[..failures.len().min(3)]
        ),
    )
}

/// A block one larger than the memory covers, so re-entry must fire.
fn forced_reentry() -> (usize, usize) {
    let cfg = StreamConfig::new(30, 3).with_block(3);
    let g = bootstrap_steady(&cfg);
    let victim = NodeId(20);
    let mut block = cycle_ancestors(&g, 0, victim, 4);
    block.sort();
    let mut sim = Simulation::new(cfg, g, 1);
    sim.checked = false;
    match step_counting(&mut sim, &[ChurnEvent { round: 1, kind: EventKind::Depart(block) }]) {
        Ok((e, o, _)) => (e, o),
        Err(_) => (1, 0),
    }
}

fn induction_latency() -> Outcome {
    let mut bad = Vec::new();
    let mut worst = 0;
    let mut cases = 0;
    for m in [2usize, 3, 4] {
        for n in [20usize, 50] {
            let cfg = StreamConfig::new(n, m);
            let g = bootstrap_steady(&cfg);
            for keep in 0..m {
                cases += 1;
                let start = keep_one_balanced(&g, keep).unwrap();
                let balanced = (0..m)
                    .filter(|&i| streamtree::overlay::substream_balance_violations(&start, &cfg, i).is_empty())
                    .count();
                let limit = 5 * m as u64;
                match rounds_to_balance(&cfg, start, limit) {
                    Some(r) if balanced == 1 => worst = worst.max(r),
                    r => bad.push(format!("m={m} n={n} keep={} balanced={balanced} rounds={r:?}", keep + 1)),
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{cases} perturbed states, slowest {worst} rounds, failures {bad:?}"))
}

fn arrival_convergence() -> Outcome {
    let mut bad = Vec::new();
    let mut times = Vec::new();
    for n in 2..=30 {
        let cfg = StreamConfig::new(n, 3);
        match bootstrap_by_arrivals(&cfg, 7) {
            Ok(b) if is_steady_state(&b.overlay, &cfg) && b.records.iter().all(|r| r.p1 && r.p2) => {
                times.push(b.quiescence)
            }
            Ok(_) => bad.push(n),
            Err(_) => bad.push(n),
        }
    }
    let longest = times.iter().flatten().max().copied();
    outcome(bad.is_empty(), format!("n=2..30 steady, longest quiescence {longest:?} rounds, failures {bad:?}"))
}

fn tolerance_tradeoff() -> Outcome {
    let m = 3;
    let mut notes = Vec::new();
    let mut pass = true;
    for tau in [Rational64::from_integer(0), Rational64::new(1, 4), Rational64::new(1, 2), Rational64::from_integer(1)]
    {
        let cfg = StreamConfig::new(11, m).with_tolerance(tau);
        let supported = Rational64::from_integer(m as i64) / (Rational64::from_integer(m as i64 + 1) - tau);
        pass &= supported_rate_tolerance(m as u32, tau) == supported && cfg.rate() == supported;
        let floor = (Rational64::from_integer(1) - tau) * cfg.rate();
        let mut worst = cfg.rate();
        for p in 1..=11 {
            match run(&single_departure(&cfg, NodeId(p), 5, 20)) {
                Ok(o) => worst = worst.min(o.records.iter().map(|r| r.transient_rate).min().unwrap_or(worst)),
                Err(_) => pass = false,
            }
        }
        pass &= worst >= floor;
        notes.push(format!("tau={tau}: R={supported} transient {worst} >= {floor}"));
    }
    let q = BoundQuery::new(11, rate(m));
    let gap = (delay_bound_tolerance(&q).unwrap() - delay_upper_bound(&q).unwrap()).abs();
    pass &= gap <= BOUND_EQ;
    notes.push(format!("tau=0 bound gap {gap:e}"));
    outcome(pass, notes.join("; "))
}

fn depth_dominance() -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    for p in realizable_profiles(12, 3) {
        let (Ok(w), Ok(lb)) = (brute_force_min_depth(&p), depth_lower_bound(&p)) else { continue };
        checked += 1;
        if (w.depth as f64) + SLACK < lb {
            violations += 1;
        }
    }
    outcome(violations == 0 && checked > 0, format!("{checked} profiles, {violations} violations"))
}

fn converse_feasibility() -> Outcome {
    let cfg = StreamConfig::new(11, 3);
    let rep = converse_feasibility_check(&tree_profiles(&bootstrap_steady(&cfg), &cfg));
    let pass = rep.feasible && rep.leaf_bound_holds() && rep.min_leaf_fraction == Rational64::new(4, 11);
    outcome(
        pass,
        format!("load {} <= 1, min d0 = {} <= {} (leaf bound)", rep.load, rep.min_leaf_fraction, rep.leaf_bound),
    )
}

fn allcast() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for n in [11usize, 50, 200] {
        let g = bootstrap_steady(&StreamConfig::new(n, 3));
        let bound = allcast_delay_bound(n as u64, rate(3)).unwrap();
        let mut worst = 0;
        for &s in g.peers.keys() {
            let rep = allcast_coverage_check(&g, s);
            pass &= rep.covered;
            worst = worst.max(rep.max_round);
        }
        pass &= worst as f64 <= bound + SLACK;
        notes.push(format!("n={n} max {worst} <= {bound:.2}"));
    }
    let g = bootstrap_steady(&StreamConfig::new(11, 3));
    let hops = |s: u32| {
        let mut h: Vec<(u64, u32, u32, bool)> =
            allcast_route(&g, NodeId(s), 0).hops.iter().map(|h| (h.round, h.from.0, h.to.0, h.duplicate)).collect();
        h.sort();
        h
    };
    let five = vec![
        (1, 5, 6, false),
        (2, 6, 7, false),
        (3, 7, 1, false),
        (3, 7, 8, false),
        (4, 1, 2, false),
        (4, 8, 9, false),
        (5, 2, 3, false),
        (5, 2, 5, true),
        (5, 9, 10, false),
        (6, 3, 4, false),
        (6, 10, 11, false),
        (7, 4, 5, true),
    ];
    let two = vec![
        (1, 2, 1, false),
        (1, 2, 3, false),
        (2, 1, 7, false),
        (2, 3, 4, false),
        (3, 4, 5, false),
        (3, 7, 8, false),
        (3, 7, 10, false),
        (4, 5, 6, false),
        (4, 8, 9, false),
        (4, 10, 11, false),
        (5, 6, 7, true),
        (5, 9, 10, true),
    ];
    let golden = hops(5) == five && hops(2) == two;
    pass &= golden;
    notes.push(format!("golden routes from 5 and 2: {}", if golden { "match" } else { "differ" }));
    outcome(pass, notes.join("; "))
}

fn multisource() -> Outcome {
    let mut notes = Vec::new();
    let cfg = StreamConfig::new(12, 3);
    let g = multi_source_bootstrap(&cfg, &[2, 2, 2]).unwrap();
    let roots: Vec<Vec<u32>> = g.roots.iter().map(|r| r.iter().map(|p| p.0).collect()).collect();
    let two_sources = connected_and_structured(&g)
        && (0..3).all(|i| subtree_sizes(&g, i) == [6, 6])
        && roots[0] == [1, 7]
        && end_links(&g, 0).unwrap()
            == [
                EndLink { end: NodeId(6), root: NodeId(1), next_root: NodeId(7) },
                EndLink { end: NodeId(12), root: NodeId(7), next_root: NodeId(1) },
            ];
    notes.push(format!("n=12 k=2 roots {roots:?}"));

    let mut skewed = multi_source_with_sizes(&cfg, &[vec![9, 3], vec![9, 3], vec![9, 3]]).unwrap();
    let rounds = rebalance_until_quiet(&mut skewed, &cfg, 50).unwrap();
    let gap = (0..3)
        .map(|i| {
            let s = subtree_sizes(&skewed, i);
            s.iter().max().unwrap() - s.iter().min().unwrap()
        })
        .max()
        .unwrap();
    notes.push(format!("9+3 rebalanced in {rounds} rounds, gap {gap}"));

    let peers: Vec<(NodeId, Rational64)> = (1..=6)
        .map(|k| (NodeId(k), Rational64::new(5, 4)))
        .chain((7..=18).map(|k| (NodeId(k), Rational64::from_integer(1))))
        .collect();
    let plan = cluster_assign(&peers, 3).unwrap();
    let high = plan.high.as_ref().unwrap();
    let structural_four = high.overlay.peers.keys().all(|&p| structural_edges(&high.overlay, p) <= 4);
    let first: Vec<u32> = plan.donations.iter().filter(|d| d.substream == 0).map(|d| d.donor.0).collect();
    let unit_ok = plan.unit.as_ref().is_some_and(|u| connected_and_structured(&u.overlay));
    notes.push(format!("5/4 cluster: first-substream donors {first:?}, {} donations", plan.donations.len()));
    let pass = two_sources && gap <= 1 && plan.within_capacity() && structural_four && first == [2, 4] && unit_ok;
    outcome(pass, notes.join("; "))
}

fn determinism() -> Outcome {
    let mut identical = 0;
    let mut total = 0;
    let base = StreamConfig::new(40, 3);
    let mut scenarios: Vec<ChurnScenario> = (0..5).map(|s| random_scenario(&base, 1000 + s, 80)).collect();
    scenarios.extend(adversarial_suite(&StreamConfig::new(30, 3).with_block(3), 3, 80));
    for sc in &scenarios {
        total += 1;
        let a = run(sc).map(|o| write_trace(&o.records));
        let b = run(sc).map(|o| write_trace(&o.records));
        if matches!((&a, &b), (Ok(x), Ok(y)) if x == y) {
            identical += 1;
        }
    }
    outcome(identical == total, format!("{identical}/{total} scenarios byte-identical"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("steady-state delay within the upper bound", steady_sandwich),
        ("converse lower bound below measured delay", converse_consistency),
        ("single-peer churn safety", churn_k1),
        ("block churn safety and re-entry accounting", churn_k3),
        ("induction latency", induction_latency),
        ("convergence from arrivals", arrival_convergence),
        ("tolerance tradeoff", tolerance_tradeoff),
        ("depth oracle dominance", depth_dominance),
        ("converse feasibility", converse_feasibility),
        ("all-cast coverage and routes", allcast),
        ("multi-source and heterogeneous clusters", multisource),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        println!("{} criterion {:>2} {name}: {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
        if !o.pass {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
