use anyhow::{Context, Result};
use num_rational::Rational64;
use std::collections::BTreeMap;
use std::fmt::Write;
use streamtree::bounds::{delay_upper_bound, BoundQuery, SLACK};
use streamtree::simulator::{format_rational, parse_rational, parse_trace, ChurnScenario};

const HEADER: &str = "# config ";

/// Comment line carrying the run parameters, so a trace can be summarized on its own.
pub fn header(sc: &ChurnScenario) -> String {
    let c = &sc.config;
    format!(
        "{HEADER}n={} m={} C={} tau={} K={} M={} seed={} horizon={}\n",
        c.n_initial,
        c.m,
        format_rational(c.capacity),
        format_rational(c.tolerance),
        c.k_block,
        c.memory,
        sc.seed,
        sc.horizon
    )
}

fn parse_header(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .find_map(|l| l.strip_prefix(HEADER))
        .map(|rest| {
            rest.split_whitespace()
                .filter_map(|kv| kv.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        })
        .unwrap_or_default()
}

pub struct Report {
    pub text: String,
    pub passed: bool,
}

/// Population change recorded in one event string.
fn population_delta(event: &str) -> i64 {
    event
        .split('+')
        .map(|item| match item.split_once(':') {
            Some(("depart", ids)) => -(ids.split(',').count() as i64),
            Some(("arrive", _)) => 1,
            _ => 0,
        })
        .sum()
}

pub fn summarize(text: &str) -> Result<Report> {
    let records = parse_trace(text).context("parsing trace")?;
    let cfg = parse_header(text);
    let get = |k: &str| cfg.get(k).and_then(|v| parse_rational(v));
    let mut out = String::new();
    let mut passed = true;
    let total = records.len();
    let count = |f: &dyn Fn(&streamtree::simulator::RoundRecord) -> bool| records.iter().filter(|r| f(r)).count();
    let _ = writeln!(out, "rounds: {total}");
    let items = || records.iter().flat_map(|r| r.event.split('+'));
    let arrivals = items().filter(|i| i.starts_with("arrive:")).count();
    let departures: usize = items().filter_map(|i| i.strip_prefix("depart:")).map(|ids| ids.split(',').count()).sum();
    let _ = writeln!(out, "events: {departures} departed, {arrivals} arrived");

    let rate = get("m").map(|m| {
        let tau = get("tau").unwrap_or_default();
        (m, tau, m / (m + Rational64::from_integer(1) - tau))
    });
    if let (Some(last), Some(n0), Some((m, _, _))) = (records.last(), get("n"), rate) {
        let n = n0.to_integer() + records.iter().map(|r| population_delta(&r.event)).sum::<i64>();
        let q = BoundQuery::new(n.max(1) as u64, m / (m + Rational64::from_integer(1)));
        match (last.delay, delay_upper_bound(&q)) {
            (Some(d), Ok(bound)) => {
                let within = d as f64 <= bound + SLACK;
                passed &= within || !last.steady;
                let _ =
                    writeln!(out, "D={d} {} {bound:.3} (steady-state bound, n={n})", if within { "≤" } else { ">" });
            }
            (None, _) => {
                let _ = writeln!(out, "D=inf");
            }
            (Some(d), Err(e)) => {
                let _ = writeln!(out, "D={d} (no bound: {e})");
            }
        }
    }
    if let (Some(min), Some((_, tau, r))) = (records.iter().map(|r| r.transient_rate).min(), rate) {
        let floor = (Rational64::from_integer(1) - tau) * r;
        let holds = min >= floor;
        passed &= holds;
        let f = |x: Rational64| *x.numer() as f64 / *x.denom() as f64;
        let _ = writeln!(
            out,
            "min transient rate {:.3} {} {:.3} = (1-tau)R",
            f(min),
            if holds { "≥" } else { "<" },
            f(floor)
        );
    }
    let p1 = count(&|r| r.p1);
    let p2 = count(&|r| r.p2);
    let _ = writeln!(
        out,
        "connectivity {p1}/{total}, structure {p2}/{total}, balanced {}/{total}, steady {}/{total}",
        count(&|r| r.p3),
        count(&|r| r.steady)
    );
    let last_event = records.iter().rev().find(|r| r.event != "none").map_or(0, |r| r.round);
    let settled = records.iter().rev().take_while(|r| r.steady).last().map(|r| r.round);
    match settled {
        Some(round) if records.last().is_some_and(|r| r.steady) => {
            let _ = writeln!(
                out,
                "quiescence: steady from round {round}, {} rounds after the last event",
                round.saturating_sub(last_event)
            );
        }
        _ => {
            let _ = writeln!(out, "quiescence: not steady at the end");
        }
    }
    let _ = writeln!(out, "re-entries: {}", records.iter().map(|r| r.reentries).sum::<usize>());
    for r in records.iter().filter(|r| !r.p1 || !r.p2) {
        passed = false;
        let _ = writeln!(out, "breach: {r}");
    }
    let _ = writeln!(out, "status: {}", if passed { "ok" } else { "FAILED" });
    Ok(Report { text: out, passed })
}
