use super::multisource::{multi_source_bootstrap, MultiSourceError};
use crate::overlay::{Endpoint, GlobalOverlay, NodeId, StreamConfig};
use crate::simulator::bootstrap_steady;
use num_rational::Rational64;
use num_traits::One;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("peer {peer}: capacity {capacity} is below 1")]
    LowCapacity { peer: NodeId, capacity: Rational64 },
    #[error("substream {0}: no high-capacity peer has residual capacity to donate")]
    InsufficientSources(usize),
    #[error(transparent)]
    MultiSource(#[from] MultiSourceError),
}

/// A group of peers of one capacity class. `local` maps the overlay's peer
/// ids `1..=n` to the original ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    pub high_capacity: bool,
    pub local: Vec<NodeId>,
    pub overlay: GlobalOverlay,
}

impl Cluster {
    pub fn original(&self, local: NodeId) -> NodeId {
        self.local[local.0 as usize - 1]
    }
}

/// Source edge from a high-capacity peer into the unit-capacity cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Donation {
    pub substream: usize,
    /// Original id of the donor.
    pub donor: NodeId,
    /// Original id of the unit-capacity root it feeds.
    pub root: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterPlan {
    /// Peers of capacity exactly 1.
    pub unit: Option<Cluster>,
    /// Peers of capacity above 1.
    pub high: Option<Cluster>,
    pub donations: Vec<Donation>,
    /// Edge slots per original peer: `(used, limit)` with `limit = floor(C (m+1))`.
    pub edge_budget: BTreeMap<NodeId, (usize, usize)>,
}

/// Outgoing data edges of a peer across all substreams, excluding edges to the server.
pub fn structural_edges(g: &GlobalOverlay, p: NodeId) -> usize {
    g.peers[&p]
        .substreams
        .iter()
        .map(|sv| sv.tree_degree() + usize::from(matches!(sv.child_redundant, Some(Endpoint::Peer(_)))))
        .sum()
}

fn edge_limit(capacity: Rational64, m: usize) -> usize {
    (capacity * Rational64::from_integer(m as i64 + 1)).floor().to_integer() as usize
}

/// Splits peers into capacity classes, builds the high-capacity overlay with
/// the plain construction, and lets degree-one children of degree-two peers
/// spend their residual edge slots as sources of the unit cluster, which then
/// runs in multi-source mode.
pub fn cluster_assign(peers: &[(NodeId, Rational64)], m: usize) -> Result<ClusterPlan, ClusterError> {
    for &(peer, capacity) in peers {
        if capacity < Rational64::one() {
            return Err(ClusterError::LowCapacity { peer, capacity });
        }
    }
    let unit_ids: Vec<NodeId> = peers.iter().filter(|p| p.1 == Rational64::one()).map(|p| p.0).collect();
    let high_ids: Vec<NodeId> = peers.iter().filter(|p| p.1 > Rational64::one()).map(|p| p.0).collect();
    let mut edge_budget: BTreeMap<NodeId, (usize, usize)> =
        peers.iter().map(|&(p, c)| (p, (0, edge_limit(c, m)))).collect();

    let high = (!high_ids.is_empty()).then(|| {
        let g = bootstrap_steady(&StreamConfig::new(high_ids.len(), m));
        Cluster { high_capacity: true, local: high_ids.clone(), overlay: g }
    });
    if let Some(h) = &high {
        for &p in h.overlay.peers.keys() {
            edge_budget.get_mut(&h.original(p)).expect("listed").0 = structural_edges(&h.overlay, p);
        }
    }

    let mut donors: Vec<Vec<NodeId>> = vec![Vec::new(); m];
    if let (Some(h), false) = (&high, unit_ids.is_empty()) {
        for (i, list) in donors.iter_mut().enumerate() {
            for (&p, pv) in &h.overlay.peers {
                let sv = &pv.substreams[i];
                let under_branch =
                    matches!(sv.parent_tree, Some(Endpoint::Peer(q)) if h.overlay.view(q, i).tree_degree() == 2);
                if sv.tree_degree() != 1 || !under_branch {
                    continue;
                }
                let orig = h.original(p);
                let (used, limit) = edge_budget[&orig];
                if used < limit {
                    edge_budget.get_mut(&orig).expect("listed").0 += 1;
                    list.push(orig);
                }
            }
            if list.is_empty() {
                return Err(ClusterError::InsufficientSources(i));
            }
        }
    }

    let mut donations = Vec::new();
    let unit = if unit_ids.is_empty() {
        None
    } else {
        let cfg = StreamConfig::new(unit_ids.len(), m);
        let g = if high.is_none() {
            bootstrap_steady(&cfg)
        } else {
            let k: Vec<usize> = donors.iter().map(|d| d.len().min(unit_ids.len())).collect();
            multi_source_bootstrap(&cfg, &k)?
        };
        let cluster = Cluster { high_capacity: false, local: unit_ids.clone(), overlay: g };
        if high.is_some() {
            for (i, list) in donors.iter().enumerate() {
                for (&donor, &root) in list.iter().zip(&cluster.overlay.roots[i]) {
                    donations.push(Donation { substream: i, donor, root: cluster.original(root) });
                }
            }
        }
        for &p in cluster.overlay.peers.keys() {
            edge_budget.get_mut(&cluster.original(p)).expect("listed").0 = structural_edges(&cluster.overlay, p);
        }
        Some(cluster)
    };
    Ok(ClusterPlan { unit, high, donations, edge_budget })
}

impl ClusterPlan {
    /// No peer uses more edge slots than its capacity allows.
    pub fn within_capacity(&self) -> bool {
        self.edge_budget.values().all(|&(used, limit)| used <= limit)
    }
}
