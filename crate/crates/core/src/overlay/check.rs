//! Structural checkers. None of them mutate the overlay.

use super::{ControlLabel, Edge, EdgeKind, Endpoint, GlobalOverlay, NodeId, Shape, StreamConfig};
use rustc_hash::FxHashMap as HashMap;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::ops::RangeInclusive;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PropertyViolation {
    Unreachable { substream: usize, peer: NodeId },
    OutDegree { substream: usize, peer: NodeId, degree: usize },
    TwoSecondaryChildren { substream: usize, peer: NodeId },
    RedundantFromNonLeaf { substream: usize, peer: NodeId },
    SecondaryWithoutLeafEdge { substream: usize, peer: NodeId },
    MultipleDegreeTwo { peer: NodeId, substreams: Vec<usize> },
    Inconsistent { substream: usize, peer: NodeId },
    Structure { substream: usize, detail: String },
    Unbalanced { substream: usize, peer: NodeId, secondary_label: u32, target: u32 },
    ChainTooShort { substream: usize, top: NodeId, length: usize },
    ChainTooLong { substream: usize, top: NodeId, length: usize },
    DegreeTwoUnderDegreeOne { substream: usize, peer: NodeId },
    LabelMismatch { substream: usize, peer: NodeId, label: u32, canonical: u32 },
}

impl PropertyViolation {
    /// Property number the violation belongs to.
    pub fn property(&self) -> u8 {
        use PropertyViolation::*;
        match self {
            Unreachable { .. } => 1,
            OutDegree { .. }
            | TwoSecondaryChildren { .. }
            | RedundantFromNonLeaf { .. }
            | SecondaryWithoutLeafEdge { .. }
            | MultipleDegreeTwo { .. }
            | Inconsistent { .. }
            | Structure { .. } => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for PropertyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use PropertyViolation::*;
        match self {
            Unreachable { substream, peer } => write!(f, "G{}: peer {peer} unreachable from S", substream + 1),
            OutDegree { substream, peer, degree } => {
                write!(f, "G{}: peer {peer} has out-degree {degree}", substream + 1)
            }
            TwoSecondaryChildren { substream, peer } => {
                write!(f, "G{}: peer {peer} has two secondary children", substream + 1)
            }
            RedundantFromNonLeaf { substream, peer } => {
                write!(f, "G{}: redundant edge from non-leaf {peer}", substream + 1)
            }
            SecondaryWithoutLeafEdge { substream, peer } => {
                write!(f, "G{}: secondary child {peer} has no redundant edge from a leaf", substream + 1)
            }
            MultipleDegreeTwo { peer, substreams } => {
                let list: Vec<String> = substreams.iter().map(|i| format!("G{}", i + 1)).collect();
                write!(f, "peer {peer} has degree two in {}", list.join(","))
            }
            Inconsistent { substream, peer } => {
                write!(f, "G{}: local views disagree at peer {peer}", substream + 1)
            }
            Structure { substream, detail } => write!(f, "G{}: {detail}", substream + 1),
            Unbalanced { substream, peer, secondary_label, target } => write!(
                f,
                "G{}: peer {peer} unbalanced (secondary label {secondary_label}, expected {target})",
                substream + 1
            ),
            ChainTooShort { substream, top, length } => {
                write!(f, "G{}: chain from {top} has length {length}", substream + 1)
            }
            ChainTooLong { substream, top, length } => {
                write!(f, "G{}: chain from {top} has length {length}", substream + 1)
            }
            DegreeTwoUnderDegreeOne { substream, peer } => {
                write!(f, "G{}: degree-two peer {peer} has a degree-one parent", substream + 1)
            }
            LabelMismatch { substream, peer, label, canonical } => {
                write!(f, "G{}: peer {peer} labeled {label}, canonical {canonical}", substream + 1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Property1Report {
    pub substream: usize,
    pub holds: bool,
    pub unreachable: Vec<NodeId>,
}

/// Label range of the subtree below a peer labeled `v` that received control label `l`.
pub fn subtree_range(v: u32, l: u32) -> RangeInclusive<u32> {
    (v + 1)..=(l.saturating_sub(1))
}

/// The balance test for a degree-two peer.
pub fn is_balanced_node(label: u32, control: u32, secondary_label: u32) -> bool {
    secondary_label == (label + control).div_ceil(2)
}

/// Reachability from the server along directed edges of each `G_i`.
pub fn check_property1(g: &GlobalOverlay) -> Vec<Property1Report> {
    (0..g.m)
        .map(|i| {
            let reach = reachable(g, &g.edges(i));
            let unreachable: Vec<NodeId> = g.peers.keys().copied().filter(|p| !reach.contains(p)).collect();
            Property1Report { substream: i, holds: unreachable.is_empty(), unreachable }
        })
        .collect()
}

fn reachable(g: &GlobalOverlay, edges: &[Edge]) -> BTreeSet<NodeId> {
    let mut adj: HashMap<Endpoint, Vec<NodeId>> = HashMap::default();
    for e in edges {
        if let Endpoint::Peer(to) = e.to {
            if e.from == Endpoint::Server || g.contains(e.from.peer().expect("peer")) {
                adj.entry(e.from).or_default().push(to);
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([Endpoint::Server]);
    while let Some(u) = queue.pop_front() {
        for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if g.contains(v) && seen.insert(v) {
                queue.push_back(v.into());
            }
        }
    }
    seen
}

/// Out-degree, leaf-protection and single-degree-two rules.
pub fn check_property2(g: &GlobalOverlay) -> Vec<PropertyViolation> {
    let mut out = Vec::new();
    let mut deg2: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for i in 0..g.m {
        let edges = g.edges(i);
        let mut tree_out: HashMap<NodeId, usize> = HashMap::default();
        let mut secondary_out: HashMap<NodeId, usize> = HashMap::default();
        let mut red_out: HashMap<NodeId, usize> = HashMap::default();
        for e in &edges {
            let Endpoint::Peer(from) = e.from else { continue };
            match e.kind {
                EdgeKind::Redundant => *red_out.entry(from).or_default() += 1,
                EdgeKind::TreeSecondary => {
                    *tree_out.entry(from).or_default() += 1;
                    *secondary_out.entry(from).or_default() += 1;
                }
                EdgeKind::TreePrimary => *tree_out.entry(from).or_default() += 1,
            }
        }
        for &p in g.peers.keys() {
            let t = tree_out.get(&p).copied().unwrap_or(0);
            let r = red_out.get(&p).copied().unwrap_or(0);
            if !(1..=2).contains(&(t + r)) {
                out.push(PropertyViolation::OutDegree { substream: i, peer: p, degree: t + r });
            }
            if secondary_out.get(&p).copied().unwrap_or(0) > 1 {
                out.push(PropertyViolation::TwoSecondaryChildren { substream: i, peer: p });
            }
            if r > 0 && t > 0 {
                out.push(PropertyViolation::RedundantFromNonLeaf { substream: i, peer: p });
            }
            if t == 2 {
                deg2.entry(p).or_default().push(i);
            }
        }
        for e in &edges {
            if e.kind != EdgeKind::TreeSecondary {
                continue;
            }
            let Endpoint::Peer(child) = e.to else { continue };
            let protected = edges.iter().any(|r| {
                r.kind == EdgeKind::Redundant
                    && r.to == e.to
                    && matches!(r.from, Endpoint::Peer(leaf) if tree_out.get(&leaf).copied().unwrap_or(0) == 0)
            });
            if !protected {
                out.push(PropertyViolation::SecondaryWithoutLeafEdge { substream: i, peer: child });
            }
        }
    }
    for (peer, substreams) in deg2 {
        if substreams.len() > 1 {
            out.push(PropertyViolation::MultipleDegreeTwo { peer, substreams });
        }
    }
    out
}

/// Disagreements between the two endpoint views of each edge.
pub fn check_consistency(g: &GlobalOverlay) -> Vec<PropertyViolation> {
    let mut out = Vec::new();
    for i in 0..g.m {
        for (&v, pv) in &g.peers {
            let sv = &pv.substreams[i];
            let get = |p: NodeId| g.peers.get(&p).map(|x| &x.substreams[i]);
            let mut ok = match sv.parent_tree {
                Some(Endpoint::Server) => g.roots[i].contains(&v),
                Some(Endpoint::Peer(p)) => {
                    get(p).is_some_and(|q| q.child_primary == Some(v) || q.child_secondary == Some(v))
                }
                None => false,
            };
            for c in [sv.child_primary, sv.child_secondary].into_iter().flatten() {
                ok &= get(c).is_some_and(|q| q.parent_tree == Some(v.into()));
            }
            if let Some(r) = sv.parent_redundant {
                ok &= get(r).is_some_and(|q| q.child_redundant == Some(v.into()));
            }
            if let Some(Endpoint::Peer(c)) = sv.child_redundant {
                ok &= get(c).is_some_and(|q| q.parent_redundant == Some(v));
            }
            if !ok {
                out.push(PropertyViolation::Inconsistent { substream: i, peer: v });
            }
        }
    }
    out
}

/// Control label every peer receives, computed from the stored labels.
pub fn control_labels(g: &GlobalOverlay, i: usize) -> HashMap<NodeId, ControlLabel> {
    let mut out = HashMap::with_capacity_and_hasher(g.n(), Default::default());
    let roots = &g.roots[i];
    for (k, &root) in roots.iter().enumerate() {
        let first = match roots.get(k + 1) {
            Some(&next) => ControlLabel { value: g.label(next, i), address: next.into() },
            None => ControlLabel { value: g.n() as u32 + 1, address: Endpoint::Server },
        };
        let mut stack = vec![(root, first)];
        while let Some((v, l)) = stack.pop() {
            if out.insert(v, l).is_some() {
                continue;
            }
            let sv = g.view(v, i);
            match (sv.child_primary, sv.child_secondary) {
                (Some(p), Some(s)) => {
                    if g.contains(s) {
                        stack.push((s, l));
                    }
                    if g.contains(p) {
                        stack.push((p, ControlLabel { value: g.label(s, i), address: s.into() }));
                    }
                }
                (Some(c), None) | (None, Some(c)) => {
                    if g.contains(c) {
                        stack.push((c, l));
                    }
                }
                (None, None) => {}
            }
        }
    }
    out
}

/// Preorder labeling. Fails if substream `i` is not a forest of valid shapes.
pub fn canonical_labels(g: &GlobalOverlay, i: usize) -> Result<BTreeMap<NodeId, u32>, super::ShapeError> {
    let shapes = Shape::from_overlay(g, i)?;
    let mut out = BTreeMap::new();
    let mut next = 1;
    for shape in &shapes {
        for &p in &shape.order {
            out.insert(p, next);
            next += 1;
        }
    }
    Ok(out)
}

/// Properties 1 and 2 plus balance, chain bounds and the degree-two placement rule.
pub fn check_property3(g: &GlobalOverlay, cfg: &StreamConfig) -> Vec<PropertyViolation> {
    let mut out: Vec<PropertyViolation> = check_property1(g)
        .into_iter()
        .flat_map(|r| {
            r.unreachable.into_iter().map(move |peer| PropertyViolation::Unreachable { substream: r.substream, peer })
        })
        .collect();
    out.extend(check_property2(g));
    out.extend(check_consistency(g));
    if !out.is_empty() {
        return out;
    }
    for i in 0..g.m {
        out.extend(substream_balance_violations(g, cfg, i));
    }
    out
}

/// Balance, chain bounds and the degree-two placement rule in `T_i` alone.
/// Vacuous below `m + 2` peers.
pub fn substream_balance_violations(g: &GlobalOverlay, cfg: &StreamConfig, i: usize) -> Vec<PropertyViolation> {
    let mut out = Vec::new();
    if g.n() < cfg.m + 2 {
        return out;
    }
    let lower = cfg.m.saturating_sub(1);
    let upper = cfg.chain_max();
    let shapes = match Shape::from_overlay(g, i) {
        Ok(s) => s,
        Err(e) => {
            out.push(PropertyViolation::Structure { substream: i, detail: e.to_string() });
            return out;
        }
    };
    let controls = control_labels(g, i);
    for shape in &shapes {
        let tree = shape.tree().expect("validated");
        for k in 0..tree.len() {
            let v = tree.order[k];
            if let Some(s) = tree.secondary[k] {
                let l = controls[&v].value;
                let (lv, ls) = (g.label(v, i), g.label(tree.order[s], i));
                if !is_balanced_node(lv, l, ls) {
                    out.push(PropertyViolation::Unbalanced {
                        substream: i,
                        peer: v,
                        secondary_label: ls,
                        target: (lv + l).div_ceil(2),
                    });
                }
                if tree.parent[k].is_some_and(|p| tree.degree(p) == 1) {
                    out.push(PropertyViolation::DegreeTwoUnderDegreeOne { substream: i, peer: v });
                }
            }
        }
        for (chain, assoc) in tree.chains() {
            let top = tree.order[chain[0]];
            let length = chain.len();
            if length > upper {
                out.push(PropertyViolation::ChainTooLong { substream: i, top, length });
            }
            if assoc.is_some() && length < lower {
                out.push(PropertyViolation::ChainTooShort { substream: i, top, length });
            }
        }
    }
    out
}

/// Property 3 on every substream with labels equal to the canonical labeling.
pub fn is_steady_state(g: &GlobalOverlay, cfg: &StreamConfig) -> bool {
    if !check_property3(g, cfg).is_empty() {
        return false;
    }
    (0..g.m).all(|i| match canonical_labels(g, i) {
        Ok(c) => c.iter().all(|(p, &l)| g.label(*p, i) == l),
        Err(_) => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subtree_range_examples() {
        assert_eq!(subtree_range(2, 7), 3..=6);
        assert!(subtree_range(1, 2).is_empty());
        assert_eq!(subtree_range(5, 7), 6..=6);
    }

    #[test]
    fn balance_test_uses_ceiling() {
        assert!(is_balanced_node(1, 12, 7));
        assert!(!is_balanced_node(1, 12, 8));
        assert!(is_balanced_node(2, 7, 5));
    }
}
