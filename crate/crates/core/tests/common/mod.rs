#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use streamtree::overlay::Edge;
use streamtree::{EdgeKind, Endpoint, GlobalOverlay, NodeId};

pub fn s() -> Endpoint {
    Endpoint::Server
}

pub fn p(id: u32) -> Endpoint {
    Endpoint::Peer(NodeId(id))
}

/// Edges of the first substream graph of the 11-peer, 3-substream steady state,
/// as drawn: degree-two peers 1, 2 and 7, chains 3-4, 5-6, 8-9, 10-11.
pub fn drawn_first_tree() -> BTreeSet<(Endpoint, Endpoint, EdgeKind)> {
    use EdgeKind::*;
    [
        (s(), p(1), TreePrimary),
        (p(1), p(2), TreePrimary),
        (p(1), p(7), TreeSecondary),
        (p(2), p(3), TreePrimary),
        (p(2), p(5), TreeSecondary),
        (p(3), p(4), TreePrimary),
        (p(5), p(6), TreePrimary),
        (p(7), p(8), TreePrimary),
        (p(7), p(10), TreeSecondary),
        (p(8), p(9), TreePrimary),
        (p(10), p(11), TreePrimary),
        (p(4), p(5), Redundant),
        (p(6), p(7), Redundant),
        (p(9), p(10), Redundant),
        (p(11), s(), Redundant),
    ]
    .into_iter()
    .collect()
}

pub fn edge_set(g: &GlobalOverlay, i: usize) -> BTreeSet<(Endpoint, Endpoint, EdgeKind)> {
    g.edges(i).into_iter().map(|e: Edge| (e.from, e.to, e.kind)).collect()
}

/// Hop distances from the server over directed edges, by plain breadth-first search.
pub fn bfs(edges: &[Edge]) -> BTreeMap<NodeId, u32> {
    let mut adj: BTreeMap<Endpoint, Vec<NodeId>> = BTreeMap::new();
    for e in edges {
        if let Endpoint::Peer(to) = e.to {
            adj.entry(e.from).or_default().push(to);
        }
    }
    let mut dist = BTreeMap::new();
    let mut queue = VecDeque::from([(Endpoint::Server, 0u32)]);
    while let Some((u, d)) = queue.pop_front() {
        for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(d + 1);
                queue.push_back((Endpoint::Peer(v), d + 1));
            }
        }
    }
    dist
}

/// Largest server distance over all peers and substreams; `None` if some peer is cut off.
pub fn oracle_delay(g: &GlobalOverlay) -> Option<u32> {
    let mut worst = 0;
    for i in 0..g.m {
        let d = bfs(&g.edges(i));
        for p in g.peers.keys() {
            worst = worst.max(*d.get(p)?);
        }
    }
    Some(worst)
}

/// Removes a peer and every pointer to it, without any repair.
pub fn cut_out(g: &mut GlobalOverlay, dead: NodeId) {
    g.peers.remove(&dead);
    for roots in &mut g.roots {
        roots.retain(|&r| r != dead);
    }
    for pv in g.peers.values_mut() {
        for sv in &mut pv.substreams {
            if sv.parent_tree == Some(dead.into()) {
                sv.parent_tree = None;
            }
            if sv.parent_redundant == Some(dead) {
                sv.parent_redundant = None;
            }
            if sv.child_primary == Some(dead) {
                sv.child_primary = None;
            }
            if sv.child_secondary == Some(dead) {
                sv.child_secondary = None;
            }
            if sv.child_redundant == Some(dead.into()) {
                sv.child_redundant = None;
            }
        }
    }
}

/// Preorder labels recomputed from pointers: root 1, primary `l+1`,
/// secondary `l + |primary subtree| + 1`.
pub fn preorder_labels(g: &GlobalOverlay, i: usize) -> BTreeMap<NodeId, u32> {
    fn size(g: &GlobalOverlay, i: usize, v: NodeId) -> u32 {
        let sv = g.view(v, i);
        1 + sv.child_primary.map_or(0, |c| size(g, i, c)) + sv.child_secondary.map_or(0, |c| size(g, i, c))
    }
    fn walk(g: &GlobalOverlay, i: usize, v: NodeId, l: u32, out: &mut BTreeMap<NodeId, u32>) {
        out.insert(v, l);
        let sv = g.view(v, i);
        if let Some(c) = sv.child_primary {
            walk(g, i, c, l + 1, out);
            if let Some(s) = sv.child_secondary {
                walk(g, i, s, l + size(g, i, c) + 1, out);
            }
        }
    }
    let mut out = BTreeMap::new();
    let mut next = 1;
    for &r in &g.roots[i] {
        walk(g, i, r, next, &mut out);
        next += size(g, i, r);
    }
    out
}
