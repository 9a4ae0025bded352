use crate::overlay::{EdgeKind, Endpoint, GlobalOverlay, NodeId, StreamConfig};
use num_rational::Rational64;
use num_traits::Zero;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelayReport {
    /// Hop distance from the server per substream; `None` when unreachable.
    pub per_peer: BTreeMap<NodeId, Vec<Option<u32>>>,
    /// Max over peers and substreams, `None` if some peer is unreachable.
    pub overall: Option<u32>,
}

/// Shortest directed hop count from the server in every `G_i`.
pub fn measure_delay(g: &GlobalOverlay) -> DelayReport {
    let mut per_peer: BTreeMap<NodeId, Vec<Option<u32>>> = g.peers.keys().map(|&p| (p, vec![None; g.m])).collect();
    for i in 0..g.m {
        let dist = hop_distances(g, i, &BTreeSet::new());
        for (p, d) in dist {
            per_peer.get_mut(&p).expect("live")[i] = Some(d);
        }
    }
    let mut overall = Some(0);
    for ds in per_peer.values() {
        for d in ds {
            overall = match (overall, d) {
                (Some(a), Some(b)) => Some(a.max(*b)),
                _ => None,
            };
        }
    }
    DelayReport { per_peer, overall }
}

fn adjacency(g: &GlobalOverlay, i: usize, dead: &BTreeSet<NodeId>) -> BTreeMap<Endpoint, Vec<(NodeId, EdgeKind)>> {
    let mut adj: BTreeMap<Endpoint, Vec<(NodeId, EdgeKind)>> = BTreeMap::new();
    let gone = |e: Endpoint| e.peer().is_some_and(|p| dead.contains(&p) || !g.contains(p));
    for e in g.edges(i) {
        if let Endpoint::Peer(to) = e.to {
            if !gone(e.from) && !gone(e.to) {
                adj.entry(e.from).or_default().push((to, e.kind));
            }
        }
    }
    adj
}

fn hop_distances(g: &GlobalOverlay, i: usize, dead: &BTreeSet<NodeId>) -> BTreeMap<NodeId, u32> {
    let adj = adjacency(g, i, dead);
    let mut dist = BTreeMap::new();
    let mut queue = VecDeque::from([(Endpoint::Server, 0u32)]);
    while let Some((u, d)) = queue.pop_front() {
        for &(v, _) in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if let std::collections::btree_map::Entry::Vacant(slot) = dist.entry(v) {
                slot.insert(d + 1);
                queue.push_back((v.into(), d + 1));
            }
        }
    }
    dist
}

/// Rate each live peer receives in one slot: per substream, the widest path
/// from the server where tree edges carry `r`, and redundant edges as well as
/// tree edges into the peers in `reduced` carry `(1-τ)r`. Peers in `dead`
/// forward nothing.
pub fn peer_rates(
    g: &GlobalOverlay,
    cfg: &StreamConfig,
    dead: &BTreeSet<NodeId>,
    reduced: &BTreeSet<(NodeId, usize)>,
) -> BTreeMap<NodeId, Rational64> {
    let r = cfg.substream_rate();
    let low = (Rational64::from_integer(1) - cfg.tolerance) * r;
    let mut total: BTreeMap<NodeId, Rational64> =
        g.peers.keys().filter(|p| !dead.contains(p)).map(|&p| (p, Rational64::zero())).collect();
    for i in 0..g.m {
        let adj = adjacency(g, i, dead);
        let full = |to: NodeId, kind: EdgeKind| kind.is_tree() && !reduced.contains(&(to, i));
        let reach = |only_full: bool| {
            let mut seen = BTreeSet::new();
            let mut queue = VecDeque::from([Endpoint::Server]);
            while let Some(u) = queue.pop_front() {
                for &(v, kind) in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                    let usable = if only_full { full(v, kind) } else { full(v, kind) || !low.is_zero() };
                    if usable && seen.insert(v) {
                        queue.push_back(v.into());
                    }
                }
            }
            seen
        };
        let fast = reach(true);
        let any = reach(false);
        for (p, acc) in total.iter_mut() {
            if fast.contains(p) {
                *acc += r;
            } else if any.contains(p) {
                *acc += low;
            }
        }
    }
    total
}
