mod common;

use common::*;
use std::collections::BTreeSet;
use streamtree::overlay::{
    canonical_labels, check_consistency, check_property1, check_property2, check_property3, is_steady_state,
    parse_snapshot, subtree_range, write_snapshot, PropertyViolation,
};
use streamtree::simulator::bootstrap_steady;
use streamtree::{EdgeKind, NodeId, StreamConfig};

fn fig2() -> (StreamConfig, streamtree::GlobalOverlay) {
    let cfg = StreamConfig::new(11, 3);
    let g = bootstrap_steady(&cfg);
    (cfg, g)
}

#[test]
fn first_substream_matches_drawn_topology() {
    let (_, g) = fig2();
    assert_eq!(edge_set(&g, 0), drawn_first_tree());
}

#[test]
fn first_substream_labels_are_preorder_with_secondary_seven() {
    let (_, g) = fig2();
    for id in 1..=11 {
        assert_eq!(g.label(NodeId(id), 0), id);
    }
    assert_eq!(g.view(NodeId(1), 0).child_secondary, Some(NodeId(7)));
    assert_eq!(preorder_labels(&g, 0), canonical_labels(&g, 0).unwrap());
}

#[test]
fn every_substream_has_the_same_shape() {
    let (_, g) = fig2();
    let degree_profile = |i: usize| {
        let mut by_label: Vec<(u32, usize)> =
            g.peers.keys().map(|&p| (g.label(p, i), g.view(p, i).tree_degree())).collect();
        by_label.sort();
        by_label
    };
    for i in 1..3 {
        assert_eq!(degree_profile(i), degree_profile(0));
    }
}

#[test]
fn each_peer_branches_in_at_most_one_tree() {
    let (_, g) = fig2();
    let mut branching = BTreeSet::new();
    for (&p, pv) in &g.peers {
        let twos = pv.degree_two_substreams();
        assert!(twos.len() <= 1, "{p} branches in {twos:?}");
        if !twos.is_empty() {
            branching.insert(p);
        }
    }
    assert_eq!(branching.len(), 9);
}

#[test]
fn steady_state_satisfies_all_properties() {
    let (cfg, g) = fig2();
    assert!(check_property1(&g).iter().all(|r| r.holds));
    assert!(check_property2(&g).is_empty());
    assert!(check_property3(&g, &cfg).is_empty());
    assert!(check_consistency(&g).is_empty());
    assert!(is_steady_state(&g, &cfg));
}

#[test]
fn delay_over_all_trees_is_four() {
    let (_, g) = fig2();
    assert_eq!(oracle_delay(&g), Some(4));
}

#[test]
fn removing_peer_one_matches_independent_search() {
    let (_, mut g) = fig2();
    cut_out(&mut g, NodeId(1));
    let reports = check_property1(&g);
    for i in 0..3 {
        let reached = bfs(&g.edges(i));
        let expected: Vec<NodeId> = g.peers.keys().copied().filter(|p| !reached.contains_key(p)).collect();
        assert_eq!(reports[i].unreachable, expected, "substream {}", i + 1);
        assert_eq!(reports[i].holds, expected.is_empty());
    }
    assert_eq!(reports[0].unreachable, (2..=11).map(NodeId).collect::<Vec<_>>());
    assert!(reports.iter().any(|r| !r.holds));
}

#[test]
fn two_secondary_children_are_reported() {
    let (_, mut g) = fig2();
    g.view_mut(NodeId(8), 0).parent_tree = Some(p(1));
    let v = check_property2(&g);
    assert!(v.contains(&PropertyViolation::TwoSecondaryChildren { substream: 0, peer: NodeId(1) }), "{v:?}");
}

#[test]
fn redundant_edge_from_branching_peer_is_reported() {
    let (_, mut g) = fig2();
    g.view_mut(NodeId(10), 0).parent_redundant = Some(NodeId(2));
    let v = check_property2(&g);
    assert!(v.contains(&PropertyViolation::RedundantFromNonLeaf { substream: 0, peer: NodeId(2) }), "{v:?}");
}

#[test]
fn second_branching_tree_is_reported() {
    let (_, mut g) = fig2();
    let peer = NodeId(2);
    let i = (1..3).find(|&i| g.view(peer, i).tree_degree() < 2).unwrap();
    let missing = 2 - g.view(peer, i).tree_degree();
    let adopted: Vec<NodeId> = g
        .peers
        .keys()
        .copied()
        .filter(|&q| q != peer && g.view(q, i).parent_tree != Some(peer.into()))
        .take(missing)
        .collect();
    for q in adopted {
        g.view_mut(q, i).parent_tree = Some(peer.into());
    }
    let v = check_property2(&g);
    assert!(v.iter().any(|x| matches!(x, PropertyViolation::MultipleDegreeTwo { peer: q, .. } if *q == peer)), "{v:?}");
}

#[test]
fn snapshot_round_trips() {
    let (_, g) = fig2();
    let text = write_snapshot(&g);
    assert!(text.starts_with("# n=11 m=3"));
    let back = parse_snapshot(&text).unwrap();
    assert_eq!(write_snapshot(&back), text);
    for i in 0..3 {
        assert_eq!(edge_set(&back, i), edge_set(&g, i));
    }
}

#[test]
fn snapshot_rejects_garbage() {
    assert!(parse_snapshot("not a snapshot").is_err());
    assert!(parse_snapshot("# n=2 m=1\nbogus line").is_err());
}

#[test]
fn subtree_ranges() {
    assert_eq!(subtree_range(2, 7), 3..=6);
    assert!(subtree_range(1, 2).is_empty());
    assert_eq!(subtree_range(5, 7), 6..=6);
}

#[test]
fn twelve_peers_are_balanced() {
    let cfg = StreamConfig::new(12, 3);
    let g = bootstrap_steady(&cfg);
    assert!(check_property3(&g, &cfg).is_empty());
    assert!(is_steady_state(&g, &cfg));
}

#[test]
fn single_peer_is_its_own_chain() {
    let cfg = StreamConfig::new(1, 3);
    let g = bootstrap_steady(&cfg);
    assert!(check_property1(&g).iter().all(|r| r.holds));
    assert!(check_property2(&g).is_empty());
    for i in 0..3 {
        let edges = edge_set(&g, i);
        assert!(edges.contains(&(s(), p(1), EdgeKind::TreePrimary)));
        assert!(edges.contains(&(p(1), s(), EdgeKind::Redundant)));
    }
    assert_eq!(oracle_delay(&g), Some(1));
}
