//! Named property suites over the library, as run by the command-line tool.

use crate::bounds::{
    allcast_delay_bound, converse_feasibility_check, delay_bound_tolerance, delay_lower_bound_converse,
    delay_upper_bound, supported_rate_tolerance, BoundQuery, DegreeProfile, TreeProfile, SLACK,
};
use crate::extensions::{
    allcast_coverage_check, cluster_assign, multi_source_bootstrap, multi_source_with_sizes, rebalance_until_quiet,
    subtree_sizes,
};
use crate::overlay::{
    check_property1, check_property2, check_property3, is_steady_state, GlobalOverlay, NodeId, Shape, ShapeError,
    StreamConfig,
};
use crate::simulator::{
    adversarial_suite, bootstrap_by_arrivals, bootstrap_steady, measure_delay, random_scenario, run, write_trace,
    ChurnEvent, ChurnScenario, EventKind, Simulation,
};
use num_rational::Rational64;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown suite `{0}`; known suites: {list}", list = SUITES.join(", "))]
pub struct UnknownSuite(pub String);

pub const SUITES: [&str; 11] = [
    "steady",
    "churn",
    "induction",
    "convergence",
    "tolerance",
    "depth",
    "feasibility",
    "allcast",
    "multisource",
    "determinism",
    "all",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckLine>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        writeln!(f, "suite {}: {} checks, {} failed", self.suite, self.checks.len(), failed)
    }
}

fn line(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> CheckLine {
    CheckLine { name: name.into(), pass, detail: detail.into() }
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport, UnknownSuite> {
    let checks = match name {
        "steady" => steady(),
        "churn" => churn(seed),
        "induction" => induction(),
        "convergence" => convergence(seed),
        "tolerance" => tolerance(),
        "depth" => depth(),
        "feasibility" => feasibility(),
        "allcast" => allcast(),
        "multisource" => multisource(),
        "determinism" => determinism(seed),
        "all" => {
            let mut all = Vec::new();
            for s in SUITES.iter().filter(|&&s| s != "all") {
                all.extend(run_suite(s, seed)?.checks);
            }
            all
        }
        _ => return Err(UnknownSuite(name.to_string())),
    };
    Ok(SuiteReport { suite: name.to_string(), checks })
}

/// Grid points where a balanced tree has room for a degree-one chain.
pub fn steady_grid() -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for n in [4, 11, 12, 50, 200, 1023] {
        for m in [2, 3, 4] {
            if n + 1 >= 2 * (m + 1) {
                out.push((n, m));
            }
        }
    }
    out
}

fn rate_of(m: usize) -> Rational64 {
    Rational64::new(m as i64, m as i64 + 1)
}

fn steady() -> Vec<CheckLine> {
    let mut out = Vec::new();
    for (n, m) in steady_grid() {
        let cfg = StreamConfig::new(n, m);
        let g = bootstrap_steady(&cfg);
        let p3 = check_property3(&g, &cfg);
        let d = measure_delay(&g).overall;
        let q = BoundQuery::new(n as u64, rate_of(m));
        let upper = delay_upper_bound(&q).unwrap_or(f64::NAN);
        let name = format!("steady n={n} m={m}");
        let ok = p3.is_empty() && d.is_some_and(|d| d as f64 <= upper + SLACK);
        out.push(line(&name, ok, format!("D={d:?} upper={upper:.3} violations={}", p3.len())));
        if let (Ok(lower), Some(d)) = (delay_lower_bound_converse(&q), d) {
            out.push(line(format!("converse n={n} m={m}"), lower <= d as f64 + SLACK, format!("{lower:.3} <= {d}")));
        }
    }
    out
}

fn churn(seed: u64) -> Vec<CheckLine> {
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for k in 0..20u64 {
        let s = seed.wrapping_add(k);
        let n = 10 + (s % 91) as usize;
        let sc = random_scenario(&StreamConfig::new(n, 3), s, 100);
        if let Err(e) = run(&sc) {
            failures.push(format!("seed {s}: {e}"));
        }
    }
    out.push(line("random churn K=1", failures.is_empty(), failures.first().cloned().unwrap_or("20 scenarios".into())));
    let mut failures = Vec::new();
    let cfg = StreamConfig::new(30, 3).with_block(3);
    for sc in adversarial_suite(&cfg, seed, 100) {
        if let Err(e) = run(&sc) {
            failures.push(format!("seed {}: {e}", sc.seed));
        }
    }
    out.push(line(
        "adversarial churn K=3",
        failures.is_empty(),
        failures.first().cloned().unwrap_or("5 scenarios".into()),
    ));
    out
}

/// Every tree except `keep` collapsed to a chain on its cycle order.
pub fn keep_one_balanced(g: &GlobalOverlay, keep: usize) -> Result<GlobalOverlay, ShapeError> {
    let mut g = g.clone();
    for j in (0..g.m).filter(|&j| j != keep) {
        let chains: Vec<Shape> = g.shapes(j)?.into_iter().map(|s| Shape::chain(s.order)).collect();
        g.apply_shapes(j, &chains)?;
    }
    Ok(g)
}

/// Quiet rounds until Property 3 holds, up to `limit`.
pub fn rounds_to_balance(cfg: &StreamConfig, g: GlobalOverlay, limit: u64) -> Option<u64> {
    let mut sim = Simulation::new(cfg.clone(), g, 1);
    for r in 1..=limit {
        sim.step(&[]).ok()?;
        if check_property3(&sim.overlay, cfg).is_empty() {
            return Some(r);
        }
    }
    None
}

fn induction() -> Vec<CheckLine> {
    let mut out = Vec::new();
    for m in [2usize, 3, 4] {
        for n in [20usize, 50] {
            let cfg = StreamConfig::new(n, m);
            let g = bootstrap_steady(&cfg);
            for keep in 0..m {
                let limit = 5 * m as u64;
                let r = keep_one_balanced(&g, keep).ok().and_then(|p| rounds_to_balance(&cfg, p, limit));
                out.push(line(
                    format!("induction m={m} n={n} kept={}", keep + 1),
                    r.is_some(),
                    format!("{r:?} <= {limit}"),
                ));
            }
        }
    }
    out
}

fn convergence(seed: u64) -> Vec<CheckLine> {
    (2..=30)
        .map(|n| {
            let cfg = StreamConfig::new(n, 3);
            match bootstrap_by_arrivals(&cfg, seed) {
                Ok(b) => line(
                    format!("arrivals n={n}"),
                    is_steady_state(&b.overlay, &cfg),
                    format!("quiescence={:?}", b.quiescence),
                ),
                Err(e) => line(format!("arrivals n={n}"), false, e.to_string()),
            }
        })
        .collect()
}

/// Bootstrapped state with one departure mid-run.
pub fn single_departure(cfg: &StreamConfig, peer: NodeId, round: u64, horizon: u64) -> ChurnScenario {
    let mut sc = ChurnScenario::quiet(cfg.clone(), 1, horizon);
    sc.events.push(ChurnEvent { round, kind: EventKind::Depart(vec![peer]) });
    sc
}

fn tolerance() -> Vec<CheckLine> {
    let mut out = Vec::new();
    let m = 3;
    for tau in [Rational64::new(0, 1), Rational64::new(1, 4), Rational64::new(1, 2), Rational64::new(1, 1)] {
        let cfg = StreamConfig::new(11, m).with_tolerance(tau);
        let expected = Rational64::new(m as i64, 1) / (Rational64::new(m as i64 + 1, 1) - tau);
        out.push(line(
            format!("supported rate tau={tau}"),
            supported_rate_tolerance(m as u32, tau) == expected && cfg.rate() == expected,
            format!("{}", cfg.rate()),
        ));
        let floor = (Rational64::new(1, 1) - tau) * cfg.rate();
        let mut worst: Option<Rational64> = None;
        let mut err = None;
        for p in 1..=11 {
            match run(&single_departure(&cfg, NodeId(p), 5, 20)) {
                Ok(o) => {
                    let t = o.metrics.min_transient_rate.unwrap_or(cfg.rate());
                    worst = Some(worst.map_or(t, |w| w.min(t)));
                }
                Err(e) => err = Some(e.to_string()),
            }
        }
        let ok = err.is_none() && worst.is_some_and(|w| w >= floor);
        out.push(line(format!("transient rate tau={tau}"), ok, err.unwrap_or(format!("{worst:?} >= {floor}"))));
    }
    let q = BoundQuery::new(11, rate_of(m));
    let (a, b) = (delay_bound_tolerance(&q), delay_upper_bound(&q));
    let ok = matches!((a.clone(), b.clone()), (Ok(a), Ok(b)) if (a - b).abs() <= 1e-12);
    out.push(line("tolerance bound at tau=0", ok, format!("{a:?} vs {b:?}")));
    out
}

fn depth() -> Vec<CheckLine> {
    let mut violations = 0;
    let mut checked = 0;
    for p in crate::bounds::realizable_profiles(12, 3) {
        let (Ok(w), Ok(lb)) = (crate::bounds::brute_force_min_depth(&p), crate::bounds::depth_lower_bound(&p)) else {
            continue;
        };
        checked += 1;
        if (w.depth as f64) + SLACK < lb {
            violations += 1;
        }
    }
    vec![line("depth oracle n<=12 l<=3", violations == 0, format!("{checked} profiles, {violations} violations"))]
}

/// Out-degree profile of every tree of `G_i`, at the per-substream rate.
pub fn tree_profiles(g: &GlobalOverlay, cfg: &StreamConfig) -> Vec<TreeProfile> {
    (0..g.m)
        .map(|i| {
            let mut counts = vec![0u64; 3];
            for pv in g.peers.values() {
                counts[pv.substreams[i].tree_degree()] += 1;
            }
            TreeProfile { profile: DegreeProfile::from_counts(&counts), rate: cfg.substream_rate() }
        })
        .collect()
}

fn feasibility() -> Vec<CheckLine> {
    let cfg = StreamConfig::new(11, 3);
    let rep = converse_feasibility_check(&tree_profiles(&bootstrap_steady(&cfg), &cfg));
    vec![line(
        "converse feasibility n=11 m=3",
        rep.feasible && rep.leaf_bound_holds() && rep.min_leaf_fraction == Rational64::new(4, 11),
        format!("min d0={} <= {} load={}", rep.min_leaf_fraction, rep.leaf_bound, rep.load),
    )]
}

fn allcast() -> Vec<CheckLine> {
    [11usize, 50, 200]
        .iter()
        .map(|&n| {
            let cfg = StreamConfig::new(n, 3);
            let g = bootstrap_steady(&cfg);
            let bound = allcast_delay_bound(n as u64, rate_of(3)).unwrap_or(f64::NAN);
            let mut worst = 0;
            let mut missed = 0;
            for &s in g.peers.keys() {
                let rep = allcast_coverage_check(&g, s);
                missed += usize::from(!rep.covered);
                worst = worst.max(rep.max_round);
            }
            line(
                format!("allcast n={n}"),
                missed == 0 && worst as f64 <= bound + SLACK,
                format!("max={worst} <= {bound:.2}, missed={missed}"),
            )
        })
        .collect()
}

fn multisource() -> Vec<CheckLine> {
    let mut out = Vec::new();
    let cfg = StreamConfig::new(12, 3);
    match multi_source_bootstrap(&cfg, &[2, 2, 2]) {
        Ok(g) => {
            let p1 = check_property1(&g).iter().all(|r| r.holds);
            let p2 = check_property2(&g).is_empty();
            let sizes: Vec<Vec<usize>> = (0..3).map(|i| subtree_sizes(&g, i)).collect();
            let ok = p1 && p2 && sizes.iter().all(|s| s == &[6, 6]);
            out.push(line("two sources n=12", ok, format!("sizes {sizes:?}")));
        }
        Err(e) => out.push(line("two sources n=12", false, e.to_string())),
    }
    let mut unbalanced = multi_source_with_sizes(&cfg, &[vec![9, 3], vec![9, 3], vec![9, 3]]);
    match unbalanced.as_mut().map_err(|e| e.to_string()).and_then(|g| {
        rebalance_until_quiet(g, &cfg, 50)
            .map_err(|e| e.to_string())
            .map(|r| (r, (0..3).map(|i| subtree_sizes(g, i)).collect::<Vec<_>>()))
    }) {
        Ok((r, sizes)) => {
            let gap_ok = sizes.iter().all(|s| s.iter().max().unwrap_or(&0) - s.iter().min().unwrap_or(&0) <= 1);
            out.push(line("size rebalance 9+3", gap_ok, format!("{r} rounds, sizes {sizes:?}")));
        }
        Err(e) => out.push(line("size rebalance 9+3", false, e)),
    }
    let peers: Vec<(NodeId, Rational64)> = (1..=6)
        .map(|k| (NodeId(k), Rational64::new(5, 4)))
        .chain((7..=18).map(|k| (NodeId(k), Rational64::new(1, 1))))
        .collect();
    match cluster_assign(&peers, 3) {
        Ok(plan) => out.push(line(
            "capacity clusters 6 at 5/4",
            plan.within_capacity() && !plan.donations.is_empty(),
            format!("{} donated sources", plan.donations.len()),
        )),
        Err(e) => out.push(line("capacity clusters 6 at 5/4", false, e.to_string())),
    }
    out
}

fn determinism(seed: u64) -> Vec<CheckLine> {
    let sc = random_scenario(&StreamConfig::new(40, 3), seed, 60);
    let trace = |sc: &ChurnScenario| run(sc).map(|o| write_trace(&o.records)).map_err(|e| e.to_string());
    let (a, b) = (trace(&sc), trace(&sc));
    vec![line("determinism", a.is_ok() && a == b, format!("{} bytes", a.as_ref().map_or(0, String::len)))]
}
