use crate::overlay::{PeerView, Stamp};

/// Shift every label at or above `pivot` by `flag` in one substream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelUpdate {
    pub substream: usize,
    pub pivot: u32,
    pub flag: i32,
    pub stamp: Stamp,
}

/// Applies an update once per stamp. `basis` is the peer's label at the start
/// of the update phase, so concurrent updates of one round commute. Returns
/// whether the update was new, in which case the peer forwards it.
pub fn apply_label_update(peer: &mut PeerView, basis: u32, msg: &LabelUpdate) -> bool {
    if !peer.applied_update_stamps.insert(msg.stamp) {
        return false;
    }
    if basis >= msg.pivot {
        let sv = &mut peer.substreams[msg.substream];
        sv.label = (sv.label as i64 + msg.flag as i64).max(1) as u32;
    }
    true
}

/// Label a peer should hold given its cycle predecessor's label, if it differs.
pub fn label_consistency(own: u32, predecessor: Option<u32>) -> Option<u32> {
    let expected = predecessor.map_or(1, |p| p + 1);
    (own != expected).then_some(expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::NodeId;

    fn upd(pivot: u32, flag: i32, seq: u32) -> LabelUpdate {
        LabelUpdate { substream: 0, pivot, flag, stamp: crate::protocol::stamp(1, 0, NodeId(4), seq) }
    }

    #[test]
    fn departure_shifts_labels_above() {
        for label in 5..=11 {
            let mut p = PeerView::new(NodeId(label), 1);
            p.substreams[0].label = label;
            assert!(apply_label_update(&mut p, label, &upd(5, -1, 0)));
            assert_eq!(p.substreams[0].label, label - 1);
        }
    }

    #[test]
    fn below_pivot_unchanged_and_dedup() {
        let mut p = PeerView::new(NodeId(2), 1);
        p.substreams[0].label = 2;
        assert!(apply_label_update(&mut p, 2, &upd(5, -1, 0)));
        assert_eq!(p.substreams[0].label, 2);
        let mut q = PeerView::new(NodeId(9), 1);
        q.substreams[0].label = 9;
        assert!(apply_label_update(&mut q, 9, &upd(5, -1, 0)));
        assert!(!apply_label_update(&mut q, 9, &upd(5, -1, 0)));
        assert_eq!(q.substreams[0].label, 8);
    }

    #[test]
    fn consistency_rule() {
        assert_eq!(label_consistency(1, None), None);
        assert_eq!(label_consistency(3, Some(3)), Some(4));
        assert_eq!(label_consistency(4, Some(3)), None);
    }
}
