use crate::overlay::{Endpoint, GlobalOverlay, NodeId, PeerView};
use std::collections::BTreeMap;

/// Which kind of substream edge a chunk arrived on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Via {
    Tree,
    Redundant,
}

/// Where a chunk came from at one peer: the sending neighbor and the edge kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CameFrom {
    pub neighbor: Endpoint,
    pub via: Via,
}

/// Neighbors a peer hands an all-cast chunk to in substream `i`. `came_from`
/// is `None` at the source. `parent_has` reports whether the peer's tree
/// parent already holds the chunk.
pub fn allcast_step(peer: &PeerView, i: usize, came_from: Option<CameFrom>, parent_has: bool) -> Vec<Endpoint> {
    let sv = &peer.substreams[i];
    let parent = sv.parent_tree;
    let (primary, secondary) = (sv.child_primary.map(Endpoint::Peer), sv.child_secondary.map(Endpoint::Peer));
    let pick = |xs: &[Option<Endpoint>]| xs.iter().flatten().copied().collect::<Vec<_>>();
    match (sv.tree_degree(), came_from) {
        (2, None) => pick(&[primary, parent]),
        (2, Some(CameFrom { neighbor, via: Via::Tree })) => {
            pick(&[primary, secondary, parent]).into_iter().filter(|&x| x != neighbor).collect()
        }
        (2, Some(CameFrom { via: Via::Redundant, .. })) => {
            if parent.is_some() && !parent_has {
                pick(&[primary, parent])
            } else {
                pick(&[primary, secondary])
            }
        }
        (1, None) => pick(&[primary.or(secondary)]),
        (1, Some(CameFrom { neighbor, via: Via::Tree })) if Some(neighbor) != parent => pick(&[parent]),
        (1, Some(_)) => pick(&[primary.or(secondary)]),
        (_, Some(CameFrom { neighbor, via: Via::Tree })) if Some(neighbor) != parent => Vec::new(),
        _ => pick(&[sv.child_redundant]),
    }
}

/// One chunk transfer in an all-cast.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AllCastHop {
    pub round: u64,
    pub from: NodeId,
    pub to: NodeId,
    /// The receiver already held the chunk and drops it.
    pub duplicate: bool,
}

/// Propagation of one source's chunk through one substream graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllCastStream {
    pub source: NodeId,
    pub substream: usize,
    /// Round of first receipt per peer; the source holds the chunk at round 0.
    pub received: BTreeMap<NodeId, u64>,
    /// Transfers between peers.
    pub hops: Vec<AllCastHop>,
    /// Round in which the server got the chunk over a tail's redundant edge.
    /// The server then passes it to the roots it feeds.
    pub server_received: Option<u64>,
}

impl AllCastStream {
    pub fn max_round(&self) -> u64 {
        self.received.values().copied().max().unwrap_or(0)
    }
}

fn via(g: &GlobalOverlay, i: usize, from: NodeId, to: NodeId) -> Via {
    let sv = g.view(to, i);
    let tree =
        sv.parent_tree == Some(from.into()) || sv.child_primary == Some(from) || sv.child_secondary == Some(from);
    if tree {
        Via::Tree
    } else {
        Via::Redundant
    }
}

/// Runs an all-cast from `source` in substream `i` until no peer forwards.
/// Peers forward in the order they first received the chunk.
pub fn allcast_route(g: &GlobalOverlay, source: NodeId, i: usize) -> AllCastStream {
    let mut received = BTreeMap::from([(source, 0u64)]);
    let mut hops = Vec::new();
    let mut server_received = None;
    let mut frontier: Vec<(Endpoint, Option<CameFrom>)> = vec![(source.into(), None)];
    let mut round = 0;
    while !frontier.is_empty() {
        round += 1;
        let mut next = Vec::new();
        let snapshot = received.clone();
        for (v, came_from) in frontier {
            let targets: Vec<Endpoint> = match v {
                Endpoint::Server => g.roots[i]
                    .iter()
                    .map(|&r| Endpoint::Peer(r))
                    .filter(|&r| Some(r) != came_from.map(|c| c.neighbor))
                    .collect(),
                Endpoint::Peer(p) => {
                    let pv = &g.peers[&p];
                    let parent_has = pv.substreams[i]
                        .parent_tree
                        .and_then(Endpoint::peer)
                        .is_some_and(|q| snapshot.contains_key(&q));
                    allcast_step(pv, i, came_from, parent_has)
                }
            };
            for to in targets {
                match (v, to) {
                    (_, Endpoint::Server) => {
                        if server_received.is_none() {
                            server_received = Some(round);
                            next.push((Endpoint::Server, Some(CameFrom { neighbor: v, via: Via::Redundant })));
                        }
                    }
                    (_, Endpoint::Peer(t)) if !g.contains(t) => {}
                    (Endpoint::Server, Endpoint::Peer(t)) => {
                        if let std::collections::btree_map::Entry::Vacant(e) = received.entry(t) {
                            e.insert(round);
                            next.push((to, Some(CameFrom { neighbor: Endpoint::Server, via: Via::Tree })));
                        }
                    }
                    (Endpoint::Peer(from), Endpoint::Peer(t)) => {
                        let duplicate = received.contains_key(&t);
                        hops.push(AllCastHop { round, from, to: t, duplicate });
                        if !duplicate {
                            received.insert(t, round);
                            next.push((to, Some(CameFrom { neighbor: v, via: via(g, i, from, t) })));
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    AllCastStream { source, substream: i, received, hops, server_received }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageReport {
    /// Every peer received the chunk in every substream.
    pub covered: bool,
    /// Per peer, the latest first-receipt round over all substreams; `None` if missed somewhere.
    pub receipt: BTreeMap<NodeId, Option<u64>>,
    pub max_round: u64,
    pub streams: Vec<AllCastStream>,
}

/// All-cast from `source` over every substream graph.
pub fn allcast_coverage_check(g: &GlobalOverlay, source: NodeId) -> CoverageReport {
    let streams: Vec<AllCastStream> = (0..g.m).map(|i| allcast_route(g, source, i)).collect();
    let mut receipt: BTreeMap<NodeId, Option<u64>> = g.peers.keys().map(|&p| (p, Some(0))).collect();
    for s in &streams {
        for (p, slot) in receipt.iter_mut() {
            *slot = match (*slot, s.received.get(p)) {
                (Some(a), Some(&b)) => Some(a.max(b)),
                _ => None,
            };
        }
    }
    let covered = receipt.values().all(Option::is_some);
    let max_round = streams.iter().map(AllCastStream::max_round).max().unwrap_or(0);
    CoverageReport { covered, receipt, max_round, streams }
}
