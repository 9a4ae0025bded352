use super::{Message, Outgoing, ProtocolFault};
use crate::overlay::{ControlLabel, Endpoint, PeerView};
use num_rational::Rational64;

/// Chunk and control-label forwarding for one substream.
///
/// `secondary_label` is the current label of the secondary child, which a
/// degree-two peer passes to its primary child together with the address.
pub fn forward(
    peer: &PeerView,
    i: usize,
    seq: u64,
    rate: Rational64,
    incoming: ControlLabel,
    secondary_label: Option<u32>,
) -> Result<Vec<Outgoing>, ProtocolFault> {
    let sv = &peer.substreams[i];
    let chunk = Message::StreamChunk { substream: i, seq, rate };
    let fault = |detail: &str| ProtocolFault { peer: peer.id, substream: i, detail: detail.into() };
    let send = |to: Endpoint, label: Option<ControlLabel>| {
        let mut out = vec![Outgoing { to, msg: chunk.clone() }];
        if let Some(label) = label {
            out.push(Outgoing { to, msg: Message::Control { substream: i, label } });
        }
        out
    };
    match (sv.child_primary, sv.child_secondary) {
        (Some(p), Some(s)) => {
            let ls = secondary_label.ok_or_else(|| fault("secondary label unknown"))?;
            let mut out = send(p.into(), Some(ControlLabel { value: ls, address: s.into() }));
            out.extend(send(s.into(), Some(incoming)));
            Ok(out)
        }
        (Some(c), None) => Ok(send(c.into(), Some(incoming))),
        (None, Some(_)) => Err(fault("secondary child without primary child")),
        (None, None) => match sv.child_redundant {
            Some(Endpoint::Peer(c)) => Ok(send(c.into(), None)),
            Some(Endpoint::Server) => Ok(Vec::new()),
            None => Err(fault("leaf without redundant edge")),
        },
    }
}
