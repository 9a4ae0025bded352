//! Per-peer rules. Every function here reads one peer's local view plus the
//! messages it received and returns what that peer does; sequencing and
//! delivery belong to the simulator.

mod balance;
mod churn;
mod forward;
mod labels;

pub use balance::{
    active_balance, induce_insert, induce_request, induce_respond, induced_balance_tick, BalanceTick, ParentInfo,
    RelayState, RequestContext, RequestOutcome,
};
pub use churn::{handle_arrival, handle_departure, insert_reply, ArrivalMove, ArrivalPlan, DepartureAction};
pub use forward::forward;
pub use labels::{apply_label_update, label_consistency, LabelUpdate};

use crate::overlay::{ControlLabel, Endpoint, NodeId, Stamp};
use num_rational::Rational64;
use thiserror::Error;

/// Child slot under a tree parent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Position {
    Primary,
    Secondary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    StreamChunk {
        substream: usize,
        seq: u64,
        rate: Rational64,
    },
    Control {
        substream: usize,
        label: ControlLabel,
    },
    LabelUpdate(LabelUpdate),
    InduceRequest {
        substream: usize,
        requester: NodeId,
    },
    /// Secondary child to its degree-two parent: who takes the parent's slot,
    /// and which leaf ends the associated chain.
    InduceReplacement {
        substream: usize,
        replacement: NodeId,
        leaf: NodeId,
    },
    /// Secondary child back to the requester: the degree-two peer it will displace.
    InduceAck {
        substream: usize,
        associated: NodeId,
    },
    /// Degree-two peer to its children: who takes its slot.
    InduceParentReplacement {
        substream: usize,
        replacement: Endpoint,
        flag: Position,
    },
    InduceResponse {
        substream: usize,
        prospective_parent: Endpoint,
        flag: Position,
    },
    InsertRequest {
        substream: usize,
        inserter: NodeId,
        parent: Endpoint,
        flag: Position,
    },
    InsertReply {
        accept: bool,
    },
    SecondaryBreak {
        substream: usize,
        parent: NodeId,
        child: NodeId,
    },
    SecondaryForm {
        substream: usize,
        parent: NodeId,
        child: NodeId,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub to: Endpoint,
    pub msg: Message,
}

/// Local state that contradicts the peer's claimed degree.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("peer {peer} in substream {substream}: {detail}")]
pub struct ProtocolFault {
    pub peer: NodeId,
    pub substream: usize,
    pub detail: String,
}

pub(crate) fn stamp(round: u64, substream: usize, origin: NodeId, seq: u32) -> Stamp {
    Stamp { round, substream: substream as u32, origin: origin.0, seq }
}
