use super::scenario::{format_rational, parse_rational};
use num_rational::Rational64;
use std::fmt;
use thiserror::Error;

/// One line of a run trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: u64,
    /// `none`, or `+`-joined items such as `depart:4,9`, `arrive:13@6`, `allcast:2`.
    pub event: String,
    /// Pointer changes made by departure repair and arrival insertion.
    pub repairs: usize,
    pub reentries: usize,
    pub p1: bool,
    pub p2: bool,
    pub p3: bool,
    pub steady: bool,
    /// Lowest per-peer rate in the churn slot, before repair.
    pub min_rate: Rational64,
    /// Lowest per-peer rate in the slot right after repair.
    pub transient_rate: Rational64,
    pub delay: Option<u32>,
}

const FIELDS: [&str; 11] =
    ["round", "event", "repairs", "reentries", "p1", "p2", "p3", "steady", "min_rate", "transient_rate", "delay"];

impl fmt::Display for RoundRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = |x: bool| if x { "1" } else { "0" };
        let delay = self.delay.map_or_else(|| "inf".to_string(), |d| d.to_string());
        write!(
            f,
            "round={} event={} repairs={} reentries={} p1={} p2={} p3={} steady={} min_rate={} transient_rate={} delay={}",
            self.round,
            self.event,
            self.repairs,
            self.reentries,
            b(self.p1),
            b(self.p2),
            b(self.p3),
            b(self.steady),
            format_rational(self.min_rate),
            format_rational(self.transient_rate),
            delay
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

/// Renders records one per line.
pub fn write_trace(records: &[RoundRecord]) -> String {
    records.iter().map(|r| format!("{r}\n")).collect()
}

/// Reads the output of [`write_trace`]. Blank lines and `#` comments are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<RoundRecord>, TraceError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let e = |message: String| TraceError { line, message };
        let pairs: Vec<(&str, &str)> = body
            .split_whitespace()
            .map(|t| t.split_once('=').ok_or_else(|| e(format!("`{t}` is not key=value"))))
            .collect::<Result<_, _>>()?;
        let keys: Vec<&str> = pairs.iter().map(|p| p.0).collect();
        if keys != FIELDS {
            return Err(e(format!("expected fields {}", FIELDS.join(" "))));
        }
        let v: Vec<&str> = pairs.iter().map(|p| p.1).collect();
        let num = |s: &str, name: &str| s.parse::<u64>().map_err(|_| e(format!("bad {name} `{s}`")));
        let flag = |s: &str, name: &str| match s {
            "1" => Ok(true),
            "0" => Ok(false),
            _ => Err(e(format!("bad {name} `{s}`"))),
        };
        let rate = |s: &str, name: &str| parse_rational(s).ok_or_else(|| e(format!("bad {name} `{s}`")));
        out.push(RoundRecord {
            round: num(v[0], "round")?,
            event: v[1].to_string(),
            repairs: num(v[2], "repairs")? as usize,
            reentries: num(v[3], "reentries")? as usize,
            p1: flag(v[4], "p1")?,
            p2: flag(v[5], "p2")?,
            p3: flag(v[6], "p3")?,
            steady: flag(v[7], "steady")?,
            min_rate: rate(v[8], "min_rate")?,
            transient_rate: rate(v[9], "transient_rate")?,
            delay: match v[10] {
                "inf" => None,
                s => Some(num(s, "delay")? as u32),
            },
        });
    }
    Ok(out)
}

/// Totals over a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunMetrics {
    pub rounds: u64,
    pub departures: usize,
    pub arrivals: usize,
    pub repairs: usize,
    pub reentries: usize,
    pub promotions: usize,
    /// Labels fixed by the consistency sweep after the update floods.
    pub label_corrections: usize,
    /// Rounds where an edge carried more than one label update.
    pub budget_overflow_rounds: usize,
    pub pipeline_commits: usize,
    pub pipeline_aborts: usize,
    pub balance_fires: usize,
    pub secondaries_created: usize,
    pub secondaries_broken: usize,
    pub max_memory: usize,
    pub max_delay: Option<u32>,
    pub min_rate: Option<Rational64>,
    pub min_transient_rate: Option<Rational64>,
    /// Rounds after the last event until the topology stopped changing, if it did.
    pub rounds_to_quiescence: Option<u64>,
    pub steady_at_end: bool,
}
