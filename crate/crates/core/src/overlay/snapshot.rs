//! Line-oriented overlay snapshots.
//!
//! ```text
//! # comment
//! peer <id> <label_1> ... <label_m>
//! <substream> <from> <to> <primary|secondary|redundant>
//! ```
//!
//! Substreams are numbered from 1 and the server is written `S`. Server edges
//! are listed in root order.

use super::{EdgeKind, Endpoint, GlobalOverlay, NodeId, PeerView};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct SnapshotError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> SnapshotError {
    SnapshotError { line, message: message.into() }
}

pub fn write_snapshot(g: &GlobalOverlay) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# n={} m={}", g.n(), g.m);
    for (id, pv) in &g.peers {
        let labels: Vec<String> = pv.substreams.iter().map(|s| s.label.to_string()).collect();
        let _ = writeln!(out, "peer {id} {}", labels.join(" "));
    }
    for i in 0..g.m {
        for r in &g.roots[i] {
            let _ = writeln!(out, "{} S {r} primary", i + 1);
        }
        for e in g.edges(i) {
            if e.from != Endpoint::Server {
                let _ = writeln!(out, "{} {} {} {}", i + 1, e.from, e.to, e.kind);
            }
        }
    }
    out
}

fn endpoint(tok: &str, line: usize) -> Result<Endpoint, SnapshotError> {
    if tok == "S" {
        return Ok(Endpoint::Server);
    }
    tok.parse::<u32>().map(|v| Endpoint::Peer(NodeId(v))).map_err(|_| err(line, format!("bad endpoint `{tok}`")))
}

pub fn parse_snapshot(text: &str) -> Result<GlobalOverlay, SnapshotError> {
    let mut peers: Vec<(usize, NodeId, Vec<u32>)> = Vec::new();
    let mut edges: Vec<(usize, usize, Endpoint, Endpoint, EdgeKind)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks[0] == "peer" {
            if toks.len() < 3 {
                return Err(err(line, "peer record needs an id and at least one label"));
            }
            let id = toks[1].parse::<u32>().map_err(|_| err(line, "bad peer id"))?;
            let labels = toks[2..]
                .iter()
                .map(|t| t.parse::<u32>().map_err(|_| err(line, format!("bad label `{t}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            peers.push((line, NodeId(id), labels));
        } else {
            if toks.len() != 4 {
                return Err(err(line, "edge record is `substream from to kind`"));
            }
            let i = toks[0].parse::<usize>().map_err(|_| err(line, "bad substream"))?;
            if i == 0 {
                return Err(err(line, "substreams are numbered from 1"));
            }
            let kind = match toks[3] {
                "primary" => EdgeKind::TreePrimary,
                "secondary" => EdgeKind::TreeSecondary,
                "redundant" => EdgeKind::Redundant,
                other => return Err(err(line, format!("unknown edge kind `{other}`"))),
            };
            edges.push((line, i - 1, endpoint(toks[1], line)?, endpoint(toks[2], line)?, kind));
        }
    }
    let m = peers.first().map(|p| p.2.len()).or_else(|| edges.iter().map(|e| e.1 + 1).max()).unwrap_or(1);
    let mut g = GlobalOverlay::empty(m);
    for (line, id, labels) in peers {
        if labels.len() != m {
            return Err(err(line, format!("expected {m} labels")));
        }
        let mut pv = PeerView::new(id, m);
        for (sv, l) in pv.substreams.iter_mut().zip(labels) {
            sv.label = l;
        }
        if g.peers.insert(id, pv).is_some() {
            return Err(err(line, format!("duplicate peer {id}")));
        }
        g.next_id = g.next_id.max(id.0 + 1);
    }
    g.peak_population = g.n();
    for (line, i, from, to, kind) in edges {
        if i >= m {
            return Err(err(line, format!("substream {} exceeds m = {m}", i + 1)));
        }
        let known = |e: Endpoint| e.peer().is_none_or(|p| g.contains(p));
        if !known(from) || !known(to) {
            return Err(err(line, "edge references an undeclared peer"));
        }
        match (from, to, kind) {
            (Endpoint::Server, Endpoint::Peer(c), EdgeKind::TreePrimary) => {
                g.roots[i].push(c);
                g.view_mut(c, i).parent_tree = Some(Endpoint::Server);
            }
            (Endpoint::Peer(p), Endpoint::Peer(c), EdgeKind::TreePrimary) => {
                g.view_mut(p, i).child_primary = Some(c);
                g.view_mut(c, i).parent_tree = Some(p.into());
            }
            (Endpoint::Peer(p), Endpoint::Peer(c), EdgeKind::TreeSecondary) => {
                g.view_mut(p, i).child_secondary = Some(c);
                g.view_mut(c, i).parent_tree = Some(p.into());
            }
            (Endpoint::Peer(r), Endpoint::Peer(c), EdgeKind::Redundant) => {
                g.view_mut(r, i).child_redundant = Some(c.into());
                g.view_mut(c, i).parent_redundant = Some(r);
            }
            (Endpoint::Peer(r), Endpoint::Server, EdgeKind::Redundant) => {
                g.view_mut(r, i).child_redundant = Some(Endpoint::Server);
            }
            _ => return Err(err(line, "edge kind not allowed between these endpoints")),
        }
    }
    Ok(g)
}
