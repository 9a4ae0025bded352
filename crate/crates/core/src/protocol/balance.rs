use super::{Message, Outgoing, Position};
use crate::overlay::{chain_max, is_balanced_node, ControlLabel, Endpoint, NodeId, PeerView, SubstreamView};

/// What a tree parent looks like from its child.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParentInfo {
    Server,
    Peer { degree: usize, balanced: bool },
}

impl ParentInfo {
    fn is_branch_point(self) -> bool {
        matches!(self, ParentInfo::Server | ParentInfo::Peer { degree: 2, .. })
    }

    /// A parent without a secondary child has nothing to balance.
    pub fn balanced(self) -> bool {
        match self {
            ParentInfo::Server => true,
            ParentInfo::Peer { degree, balanced } => degree != 2 || balanced,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RequestContext {
    pub control: ControlLabel,
    pub parent: ParentInfo,
    pub secondary_label: Option<u32>,
    pub m: usize,
    /// Only the anchor tree creates secondary edges on its own.
    pub may_create: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RequestOutcome {
    None,
    CreateSecondary { target_label: u32 },
    BreakSecondary,
    Request { to: NodeId },
}

/// Chain maintenance and induced-graph requests for one peer in one tree.
pub fn induce_request(v: &SubstreamView, ctx: &RequestContext) -> RequestOutcome {
    let l = ctx.control.value;
    let min_side = ctx.m.saturating_sub(1) as i64;
    match v.tree_degree() {
        2 => {
            let Some(ls) = ctx.secondary_label else { return RequestOutcome::None };
            let right = l as i64 - ls as i64;
            let left = ls as i64 - v.label as i64 - 1;
            if right < min_side || left < min_side {
                RequestOutcome::BreakSecondary
            } else {
                RequestOutcome::None
            }
        }
        degree if ctx.parent.is_branch_point() => {
            let below = l.saturating_sub(v.label) as usize;
            if degree == 1 && below > chain_max(ctx.m) {
                if ctx.may_create {
                    return RequestOutcome::CreateSecondary { target_label: (v.label + l).div_ceil(2) };
                }
                return RequestOutcome::None;
            }
            match (ctx.parent, ctx.control.address) {
                (ParentInfo::Peer { degree: 2, balanced: true }, Endpoint::Peer(q)) => {
                    RequestOutcome::Request { to: q }
                }
                _ => RequestOutcome::None,
            }
        }
        _ => RequestOutcome::None,
    }
}

/// Target label for rebinding the secondary edge of an unbalanced degree-two
/// peer whose parent is balanced.
pub fn active_balance(
    v: &SubstreamView,
    l: ControlLabel,
    secondary_label: Option<u32>,
    parent: ParentInfo,
) -> Option<u32> {
    let ls = secondary_label?;
    if v.tree_degree() != 2 || is_balanced_node(v.label, l.value, ls) || !parent.balanced() {
        return None;
    }
    Some((v.label + l.value).div_ceil(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BalanceTick {
    Reset,
    Increment,
    /// Threshold reached with a balanced parent: rebind to this label.
    Fire {
        target_label: u32,
    },
    /// Threshold reached but the parent is still unbalanced.
    Wait,
}

/// Timer step for a peer in the anchor tree.
pub fn induced_balance_tick(
    v: &SubstreamView,
    l: ControlLabel,
    secondary_label: Option<u32>,
    parent: ParentInfo,
    threshold: u32,
) -> BalanceTick {
    let unbalanced = match secondary_label {
        Some(ls) if v.tree_degree() == 2 => !is_balanced_node(v.label, l.value, ls),
        _ => false,
    };
    if !unbalanced {
        return BalanceTick::Reset;
    }
    if v.balance_timer < threshold {
        return BalanceTick::Increment;
    }
    match active_balance(v, l, secondary_label, parent) {
        Some(target_label) => BalanceTick::Fire { target_label },
        None => BalanceTick::Wait,
    }
}

/// What a peer has learned so far in one induction exchange.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelayState {
    /// For a requester: the degree-two peer whose slot it takes.
    pub associated: Option<NodeId>,
    /// For a degree-two peer: the chain top taking its slot.
    pub replacement: Option<NodeId>,
    /// For a degree-two peer: the leaf of its associated chain.
    pub group_leaf: Option<NodeId>,
    pub parent_replacement: Option<(Endpoint, Position)>,
    pub prospective: Option<(Endpoint, Position)>,
}

/// Processes one slot's induction messages at `v` in tree `i` and returns the
/// relays sent in response.
pub fn induce_respond(v: &PeerView, i: usize, state: &mut RelayState, inbox: &[Message]) -> Vec<Outgoing> {
    let sv = &v.substreams[i];
    let mut out = Vec::new();
    for msg in inbox {
        match *msg {
            Message::InduceRequest { requester, .. } => {
                let (Some(Endpoint::Peer(d)), Some(leaf)) = (sv.parent_tree, sv.parent_redundant) else {
                    continue;
                };
                out.push(Outgoing {
                    to: d.into(),
                    msg: Message::InduceReplacement { substream: i, replacement: requester, leaf },
                });
                out.push(Outgoing { to: requester.into(), msg: Message::InduceAck { substream: i, associated: d } });
            }
            Message::InduceAck { associated, .. } => state.associated = Some(associated),
            Message::InduceReplacement { replacement, leaf, .. } => {
                state.replacement = Some(replacement);
                state.group_leaf = Some(leaf);
                let mine =
                    |flag| Message::InduceParentReplacement { substream: i, replacement: replacement.into(), flag };
                if let Some(p) = sv.child_primary {
                    out.push(Outgoing { to: p.into(), msg: mine(Position::Primary) });
                }
                if let Some(s) = sv.child_secondary {
                    out.push(Outgoing { to: s.into(), msg: mine(Position::Secondary) });
                }
                if sv.parent_tree == Some(Endpoint::Server) {
                    out.push(Outgoing {
                        to: replacement.into(),
                        msg: Message::InduceResponse {
                            substream: i,
                            prospective_parent: Endpoint::Server,
                            flag: Position::Primary,
                        },
                    });
                }
            }
            Message::InduceParentReplacement { replacement, flag, .. } => {
                state.parent_replacement = Some((replacement, flag));
                let response = Message::InduceResponse { substream: i, prospective_parent: replacement, flag };
                if sv.tree_degree() == 2 {
                    if let Some(c) = state.replacement {
                        out.push(Outgoing { to: c.into(), msg: response });
                    }
                } else if let Some(d) = state.associated {
                    let to = sv.child_primary.unwrap_or(d);
                    out.push(Outgoing { to: to.into(), msg: response });
                } else {
                    state.prospective = Some((replacement, flag));
                }
            }
            Message::InduceResponse { prospective_parent, flag, .. } => {
                state.prospective = Some((prospective_parent, flag));
            }
            _ => {}
        }
    }
    out
}

/// Insertion request into tree `i+1`: `v` asks to sit in the `flag` slot of
/// its prospective parent there.
pub fn induce_insert(v: &PeerView, i: usize, m: usize, state: &RelayState) -> Outgoing {
    let sv = &v.substreams[i];
    let (parent, flag) = state.prospective.unwrap_or_else(|| match (state.group_leaf, state.replacement) {
        (Some(leaf), Some(c)) if leaf != c => (leaf.into(), Position::Primary),
        _ => (sv.parent_tree.unwrap_or(Endpoint::Server), Position::Primary),
    });
    Outgoing { to: parent, msg: Message::InsertRequest { substream: (i + 1) % m, inserter: v.id, parent, flag } }
}
