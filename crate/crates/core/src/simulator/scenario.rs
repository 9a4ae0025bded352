use crate::overlay::{NodeId, StreamConfig};
use num_rational::Rational64;
use std::collections::BTreeMap;
use std::fmt::Write;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Contact {
    Peer(NodeId),
    /// A uniformly random live peer, drawn from the scenario seed.
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    /// A block of peers leaving in the same round.
    Depart(Vec<NodeId>),
    Arrive(Contact),
    AllCast(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChurnEvent {
    pub round: u64,
    pub kind: EventKind,
}

/// A full run description: system parameters, initial population, and the
/// events of every round up to `horizon`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChurnScenario {
    pub config: StreamConfig,
    pub seed: u64,
    pub horizon: u64,
    pub events: Vec<ChurnEvent>,
    pub capacities: BTreeMap<NodeId, Rational64>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError { line, message: message.into() }
}

/// Parses `a/b`, an integer, or a finite decimal such as `0.25`.
pub fn parse_rational(s: &str) -> Option<Rational64> {
    if let Some((a, b)) = s.split_once('/') {
        let a: i64 = a.trim().parse().ok()?;
        let b: i64 = b.trim().parse().ok()?;
        return (b != 0).then(|| Rational64::new(a, b));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let negative = int.starts_with('-');
        let whole: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().ok()? };
        let den = 10i64.pow(frac.len() as u32);
        let num: i64 = frac.parse().ok()?;
        let magnitude = whole.checked_abs()?.checked_mul(den)?.checked_add(num)?;
        return Some(Rational64::new(if negative { -magnitude } else { magnitude }, den));
    }
    s.parse::<i64>().ok().map(Rational64::from_integer)
}

pub fn format_rational(r: Rational64) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn parse_id(s: &str, line: usize) -> Result<NodeId, ScenarioError> {
    match s.parse::<u32>() {
        Ok(v) if v > 0 => Ok(NodeId(v)),
        _ => Err(err(line, format!("bad peer id `{s}`"))),
    }
}

impl ChurnScenario {
    /// A scenario with no events.
    pub fn quiet(config: StreamConfig, seed: u64, horizon: u64) -> Self {
        ChurnScenario { config, seed, horizon, events: Vec::new(), capacities: BTreeMap::new() }
    }

    /// Reads the text format:
    ///
    /// ```text
    /// # n m C tau K M seed horizon
    /// 12 3 1 0 2 6 7 40
    /// 5 depart 4,9
    /// 6 arrive random
    /// 8 arrive 3
    /// 9 allcast 5
    /// capacity 2 5/4
    /// ```
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(err(hl, "header needs `n m C tau K M seed horizon`"));
        }
        let int = |s: &str, what: &str| s.parse::<u64>().map_err(|_| err(hl, format!("bad {what} `{s}`")));
        let rat = |s: &str, what: &str| parse_rational(s).ok_or_else(|| err(hl, format!("bad {what} `{s}`")));
        let config = StreamConfig {
            n_initial: int(fields[0], "n")? as usize,
            m: int(fields[1], "m")? as usize,
            capacity: rat(fields[2], "capacity")?,
            tolerance: rat(fields[3], "tolerance")?,
            k_block: int(fields[4], "K")? as usize,
            memory: int(fields[5], "M")? as usize,
            degree_bound: 2,
        };
        if config.n_initial > 100_000 || config.m > 64 || config.k_block > 100_000 {
            return Err(err(hl, "parameters out of range"));
        }
        config.validate().map_err(|e| err(hl, e.to_string()))?;
        let mut scenario = ChurnScenario::quiet(config, int(fields[6], "seed")?, int(fields[7], "horizon")?);
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f[0] == "capacity" {
                if f.len() != 3 {
                    return Err(err(ln, "expected `capacity id value`"));
                }
                let value = parse_rational(f[2]).filter(|c| *c > Rational64::from_integer(0));
                let value = value.ok_or_else(|| err(ln, format!("bad capacity `{}`", f[2])))?;
                scenario.capacities.insert(parse_id(f[1], ln)?, value);
                continue;
            }
            if f.len() != 3 {
                return Err(err(ln, "expected `round kind argument`"));
            }
            let round = f[0].parse::<u64>().map_err(|_| err(ln, format!("bad round `{}`", f[0])))?;
            let kind = match f[1] {
                "depart" => {
                    let ids = f[2].split(',').map(|s| parse_id(s, ln)).collect::<Result<Vec<_>, _>>()?;
                    EventKind::Depart(ids)
                }
                "arrive" if f[2] == "random" => EventKind::Arrive(Contact::Random),
                "arrive" => EventKind::Arrive(Contact::Peer(parse_id(f[2], ln)?)),
                "allcast" => EventKind::AllCast(parse_id(f[2], ln)?),
                other => return Err(err(ln, format!("unknown event `{other}`"))),
            };
            scenario.events.push(ChurnEvent { round, kind });
            scenario.check_last(ln)?;
        }
        Ok(scenario)
    }

    fn check_last(&self, ln: usize) -> Result<(), ScenarioError> {
        let last = self.events.last().expect("just pushed");
        if last.round == 0 || last.round > self.horizon {
            return Err(err(ln, format!("round {} outside 1..={}", last.round, self.horizon)));
        }
        let before = &self.events[..self.events.len() - 1];
        if before.last().is_some_and(|e| e.round > last.round) {
            return Err(err(ln, "events must be sorted by round"));
        }
        let same = |pred: fn(&EventKind) -> bool| before.iter().any(|e| e.round == last.round && pred(&e.kind));
        match &last.kind {
            EventKind::Depart(ids) => {
                if ids.len() > self.config.k_block {
                    return Err(err(ln, format!("block of {} exceeds K = {}", ids.len(), self.config.k_block)));
                }
                let mut sorted = ids.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != ids.len() {
                    return Err(err(ln, "duplicate peer in block"));
                }
                if same(|k| matches!(k, EventKind::Depart(_))) {
                    return Err(err(ln, "one departure block per round"));
                }
            }
            EventKind::Arrive(_) => {
                if same(|k| matches!(k, EventKind::Arrive(_))) {
                    return Err(err(ln, "one arrival per round"));
                }
            }
            EventKind::AllCast(_) => {}
        }
        Ok(())
    }

    /// Inverse of [`ChurnScenario::parse`].
    pub fn serialize(&self) -> String {
        let c = &self.config;
        let mut out = String::from("# n m C tau K M seed horizon\n");
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            c.n_initial,
            c.m,
            format_rational(c.capacity),
            format_rational(c.tolerance),
            c.k_block,
            c.memory,
            self.seed,
            self.horizon
        );
        for (id, cap) in &self.capacities {
            let _ = writeln!(out, "capacity {id} {}", format_rational(*cap));
        }
        for e in &self.events {
            let arg = match &e.kind {
                EventKind::Depart(ids) => {
                    let ids: Vec<String> = ids.iter().map(|p| p.to_string()).collect();
                    format!("depart {}", ids.join(","))
                }
                EventKind::Arrive(Contact::Random) => "arrive random".into(),
                EventKind::Arrive(Contact::Peer(p)) => format!("arrive {p}"),
                EventKind::AllCast(p) => format!("allcast {p}"),
            };
            let _ = writeln!(out, "{} {arg}", e.round);
        }
        out
    }

    pub fn events_at(&self, round: u64) -> Vec<ChurnEvent> {
        self.events.iter().filter(|e| e.round == round).cloned().collect()
    }
}
