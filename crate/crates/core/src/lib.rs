//! Deterministic peer-to-peer streaming overlay built from `m` redundant
//! substream trees.
//!
//! [`overlay`] holds the graph types and the structural checkers,
//! [`protocol`] the per-peer maintenance rules, [`simulator`] the slotted
//! churn engine, [`bounds`] the closed-form delay and rate bounds, and
//! [`extensions`] all-cast forwarding and the multi-source mode.

pub mod bounds;
pub mod extensions;
pub mod overlay;
pub mod protocol;
pub mod simulator;
pub mod suite;

pub use overlay::{ControlLabel, EdgeKind, Endpoint, GlobalOverlay, NodeId, PeerView, StreamConfig, SubstreamView};
