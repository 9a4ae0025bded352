//! Substream graphs, labels and the structural properties they must keep.

mod check;
mod shape;
mod snapshot;

pub use check::{
    canonical_labels, check_consistency, check_property1, check_property2, check_property3, control_labels,
    is_balanced_node, is_steady_state, substream_balance_violations, subtree_range, Property1Report, PropertyViolation,
};
pub use shape::{Shape, ShapeError, ShapeTree};
pub use snapshot::{parse_snapshot, write_snapshot, SnapshotError};

use num_rational::Rational64;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Stable peer identifier. The server is not a `NodeId`; see [`Endpoint`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Either the streaming server or a peer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Server,
    Peer(NodeId),
}

impl Endpoint {
    pub fn peer(self) -> Option<NodeId> {
        match self {
            Endpoint::Peer(p) => Some(p),
            Endpoint::Server => None,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Server => write!(f, "S"),
            Endpoint::Peer(p) => write!(f, "{p}"),
        }
    }
}

impl From<NodeId> for Endpoint {
    fn from(p: NodeId) -> Self {
        Endpoint::Peer(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    TreePrimary,
    TreeSecondary,
    Redundant,
}

impl EdgeKind {
    pub fn is_tree(self) -> bool {
        !matches!(self, EdgeKind::Redundant)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::TreePrimary => "primary",
            EdgeKind::TreeSecondary => "secondary",
            EdgeKind::Redundant => "redundant",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: Endpoint,
    pub to: Endpoint,
    pub kind: EdgeKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("m must be at least 1")]
    ZeroSubstreams,
    #[error("tolerance must lie in [0, 1], got {0}")]
    Tolerance(Rational64),
    #[error("capacity must be positive, got {0}")]
    Capacity(Rational64),
    #[error("block size K must be at least 1")]
    ZeroBlock,
    #[error("memory M = {memory} is below K*m = {required}")]
    Memory { memory: usize, required: usize },
    #[error("rate {rate} is not below capacity {capacity}")]
    RateAboveCapacity { rate: Rational64, capacity: Rational64 },
}

/// System parameters shared by every peer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamConfig {
    pub n_initial: usize,
    pub m: usize,
    pub capacity: Rational64,
    pub tolerance: Rational64,
    pub k_block: usize,
    pub memory: usize,
    pub degree_bound: usize,
}

impl StreamConfig {
    /// Unit capacity, no tolerance, `K = 1`, `M = m`.
    pub fn new(n_initial: usize, m: usize) -> Self {
        StreamConfig {
            n_initial,
            m,
            capacity: Rational64::from_integer(1),
            tolerance: Rational64::from_integer(0),
            k_block: 1,
            memory: m,
            degree_bound: 2,
        }
    }

    pub fn with_block(mut self, k: usize) -> Self {
        self.k_block = k;
        self.memory = self.memory.max(k * self.m);
        self
    }

    pub fn with_tolerance(mut self, tau: Rational64) -> Self {
        self.tolerance = tau;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.m == 0 {
            return Err(ConfigError::ZeroSubstreams);
        }
        let zero = Rational64::from_integer(0);
        let one = Rational64::from_integer(1);
        if self.tolerance < zero || self.tolerance > one {
            return Err(ConfigError::Tolerance(self.tolerance));
        }
        if self.capacity <= zero {
            return Err(ConfigError::Capacity(self.capacity));
        }
        if self.k_block == 0 {
            return Err(ConfigError::ZeroBlock);
        }
        if self.memory < self.k_block * self.m {
            return Err(ConfigError::Memory { memory: self.memory, required: self.k_block * self.m });
        }
        if self.tolerance < one && self.rate() >= self.capacity {
            return Err(ConfigError::RateAboveCapacity { rate: self.rate(), capacity: self.capacity });
        }
        Ok(())
    }

    /// Per-substream rate `1/(m+1-τ)`.
    pub fn substream_rate(&self) -> Rational64 {
        Rational64::from_integer(1) / (Rational64::from_integer(self.m as i64 + 1) - self.tolerance)
    }

    /// Total rate `m/(m+1-τ)`.
    pub fn rate(&self) -> Rational64 {
        self.substream_rate() * Rational64::from_integer(self.m as i64)
    }

    /// Cycle ancestors remembered per substream beyond the direct predecessor.
    pub fn ancestors_per_substream(&self) -> usize {
        (self.memory / self.m).max(1)
    }

    pub fn chain_max(&self) -> usize {
        chain_max(self.m)
    }

    pub fn balance_threshold(&self) -> u32 {
        5 * self.m as u32
    }
}

/// Longest allowed degree-one chain. For `m = 1` the usual `2m-2` is zero,
/// which no tree can satisfy, so two is used instead.
pub fn chain_max(m: usize) -> usize {
    (2 * m).saturating_sub(2).max(2)
}

/// `(l, address)` pair sent down a tree edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ControlLabel {
    pub value: u32,
    pub address: Endpoint,
}

/// One peer's state in one substream.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SubstreamView {
    pub parent_tree: Option<Endpoint>,
    pub parent_redundant: Option<NodeId>,
    pub child_primary: Option<NodeId>,
    pub child_secondary: Option<NodeId>,
    pub child_redundant: Option<Endpoint>,
    pub label: u32,
    pub last_control_label: Option<ControlLabel>,
    pub balance_timer: u32,
}

impl SubstreamView {
    /// Number of tree children.
    pub fn tree_degree(&self) -> usize {
        self.child_primary.is_some() as usize + self.child_secondary.is_some() as usize
    }

    pub fn is_leaf(&self) -> bool {
        self.tree_degree() == 0
    }
}

/// Update identifier used for flood deduplication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Stamp {
    pub round: u64,
    pub substream: u32,
    pub origin: u32,
    pub seq: u32,
}

/// A peer's local state across all substreams.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PeerView {
    pub id: NodeId,
    pub substreams: Vec<SubstreamView>,
    /// Per substream, the cycle ancestors at distance 2, 3, ... from this peer.
    pub address_memory: Vec<Vec<Endpoint>>,
    pub applied_update_stamps: BTreeSet<Stamp>,
    pub capacity: Rational64,
}

impl PeerView {
    pub fn new(id: NodeId, m: usize) -> Self {
        PeerView {
            id,
            substreams: vec![SubstreamView::default(); m],
            address_memory: vec![Vec::new(); m],
            applied_update_stamps: BTreeSet::new(),
            capacity: Rational64::from_integer(1),
        }
    }

    pub fn memory_len(&self) -> usize {
        self.address_memory.iter().map(Vec::len).sum()
    }

    /// Substreams in which this peer has two tree children.
    pub fn degree_two_substreams(&self) -> Vec<usize> {
        (0..self.substreams.len()).filter(|&i| self.substreams[i].tree_degree() == 2).collect()
    }
}

/// Omniscient snapshot used by the simulator, checkers and metrics.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GlobalOverlay {
    pub m: usize,
    pub peers: BTreeMap<NodeId, PeerView>,
    /// Server children per substream. Several entries only in multi-source mode.
    pub roots: Vec<Vec<NodeId>>,
    pub round: u64,
    pub peak_population: usize,
    pub next_id: u32,
}

impl GlobalOverlay {
    pub fn empty(m: usize) -> Self {
        GlobalOverlay {
            m,
            peers: BTreeMap::new(),
            roots: vec![Vec::new(); m],
            round: 0,
            peak_population: 0,
            next_id: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.peers.len()
    }

    pub fn view(&self, p: NodeId, i: usize) -> &SubstreamView {
        &self.peers[&p].substreams[i]
    }

    pub fn view_mut(&mut self, p: NodeId, i: usize) -> &mut SubstreamView {
        &mut self.peers.get_mut(&p).expect("live peer").substreams[i]
    }

    pub fn label(&self, p: NodeId, i: usize) -> u32 {
        self.view(p, i).label
    }

    pub fn contains(&self, p: NodeId) -> bool {
        self.peers.contains_key(&p)
    }

    /// Registers a fresh peer with no edges and returns its id.
    pub fn add_peer(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.peers.insert(id, PeerView::new(id, self.m));
        self.peak_population = self.peak_population.max(self.peers.len());
        id
    }

    /// Edges of `G_i`, read from the child side of every tree edge and both
    /// sides of redundant edges.
    pub fn edges(&self, i: usize) -> Vec<Edge> {
        let mut out = Vec::new();
        for &r in &self.roots[i] {
            out.push(Edge { from: Endpoint::Server, to: r.into(), kind: EdgeKind::TreePrimary });
        }
        for (&id, pv) in &self.peers {
            let sv = &pv.substreams[i];
            if let Some(Endpoint::Peer(p)) = sv.parent_tree {
                let kind = match self.peers.get(&p) {
                    Some(parent) if parent.substreams[i].child_primary == Some(id) => EdgeKind::TreePrimary,
                    _ => EdgeKind::TreeSecondary,
                };
                out.push(Edge { from: p.into(), to: id.into(), kind });
            }
            if let Some(r) = sv.parent_redundant {
                out.push(Edge { from: r.into(), to: id.into(), kind: EdgeKind::Redundant });
            }
            if sv.child_redundant == Some(Endpoint::Server) {
                out.push(Edge { from: id.into(), to: Endpoint::Server, kind: EdgeKind::Redundant });
            }
        }
        out.sort();
        out
    }

    /// Peer of substream `i` holding `label`, if any. Acts as the tracker directory.
    pub fn lookup_label(&self, i: usize, label: u32) -> Option<NodeId> {
        self.peers.values().find(|pv| pv.substreams[i].label == label).map(|pv| pv.id)
    }

    /// Per-substream tree structure. Fails on any pointer inconsistency.
    pub fn shapes(&self, i: usize) -> Result<Vec<Shape>, ShapeError> {
        Shape::from_overlay(self, i)
    }

    /// Replaces the pointers of substream `i` by the given forest. Labels,
    /// control labels and timers are kept.
    pub fn apply_shapes(&mut self, i: usize, shapes: &[Shape]) -> Result<(), ShapeError> {
        shape::apply(self, i, shapes)
    }
}
