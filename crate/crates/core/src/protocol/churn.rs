use crate::overlay::{is_balanced_node, ControlLabel, Endpoint, NodeId, PeerView, SubstreamView};

/// What a surviving peer does in one substream when peers depart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepartureAction {
    None,
    /// The tree parent left but the redundant parent is alive, so the
    /// redundant edge becomes the tree edge.
    Promote {
        from: NodeId,
    },
    /// The cycle predecessor left; reconnect below the first live remembered ancestor.
    Reattach {
        to: Endpoint,
    },
    /// Every remembered ancestor left; rejoin through the server.
    ReEntry,
}

/// Departure handling for peer `v` in substream `i`.
pub fn handle_departure(v: &PeerView, i: usize, is_dead: &dyn Fn(NodeId) -> bool) -> DepartureAction {
    let sv = &v.substreams[i];
    let dead = |e: Endpoint| e.peer().is_some_and(is_dead);
    let pred = match sv.parent_redundant {
        Some(r) => Endpoint::Peer(r),
        None => sv.parent_tree.unwrap_or(Endpoint::Server),
    };
    if !dead(pred) {
        return match (sv.parent_tree, sv.parent_redundant) {
            (Some(t), Some(r)) if dead(t) => DepartureAction::Promote { from: r },
            _ => DepartureAction::None,
        };
    }
    match v.address_memory[i].iter().find(|&&a| !dead(a)) {
        Some(&to) => DepartureAction::Reattach { to },
        None => DepartureAction::ReEntry,
    }
}

/// How a newcomer joins one substream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ArrivalMove {
    /// The newcomer becomes the contact's child, above the contact's old child.
    AfterContact,
    /// The contact has degree two here; the newcomer asks to take the slot of
    /// one of its children from other substreams, in this order.
    TakeSlot { candidates: Vec<NodeId> },
    /// Join below the last peer of the cycle, found through the server.
    Server,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArrivalPlan {
    pub newcomer: NodeId,
    pub moves: Vec<ArrivalMove>,
}

/// Arrival plan from the contact's local view. `None` means the contact is
/// unknown or gone.
pub fn handle_arrival(contact: Option<&PeerView>, newcomer: NodeId, m: usize) -> ArrivalPlan {
    let Some(c) = contact else {
        return ArrivalPlan { newcomer, moves: vec![ArrivalMove::Server; m] };
    };
    let children: Vec<NodeId> =
        c.substreams.iter().filter(|sv| sv.tree_degree() == 1).filter_map(|sv| sv.child_primary).collect();
    let moves = c
        .substreams
        .iter()
        .map(|sv| {
            if sv.tree_degree() <= 1 {
                ArrivalMove::AfterContact
            } else {
                ArrivalMove::TakeSlot { candidates: children.clone() }
            }
        })
        .collect();
    ArrivalPlan { newcomer, moves }
}

/// Reply of peer `u` to a request to insert a peer between `u` and its parent.
/// Only a balanced degree-two peer refuses.
pub fn insert_reply(u: &SubstreamView, control: Option<ControlLabel>, secondary_label: Option<u32>) -> bool {
    if u.tree_degree() != 2 {
        return true;
    }
    match (control, secondary_label) {
        (Some(l), Some(ls)) => !is_balanced_node(u.label, l.value, ls),
        _ => true,
    }
}
