//! A substream tree as its cycle order plus the set of secondary edges.
//!
//! Removing the secondary edges from `G_i` leaves the path
//! `S -> o[0] -> o[1] -> ... -> o[n-1] -> S`, built from primary tree edges
//! and redundant edges. A secondary pair `(x, s)` makes `x` the tree parent
//! of `s` and turns the edge `o[pos(s)-1] -> s` into a redundant edge. Labels
//! are positions along the path, so pair edits never move a label.

use super::{Endpoint, GlobalOverlay, NodeId};
use rustc_hash::FxHashMap as HashMap;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("peer {0} appears twice")]
    Duplicate(NodeId),
    #[error("peer {0} is not part of the order")]
    Unknown(NodeId),
    #[error("secondary pair ({0}, {1}) is not a forward jump of at least two")]
    BadPair(NodeId, NodeId),
    #[error("peer {0} is the target of two secondary pairs")]
    DoubleTarget(NodeId),
    #[error("peer {0} has a secondary child but no primary child")]
    SecondaryWithoutPrimary(NodeId),
    #[error("secondary pairs cross near peer {0}")]
    Crossing(NodeId),
    #[error("peer {0} has inconsistent tree pointers in substream {1}")]
    Pointer(NodeId, usize),
    #[error("peer {0} is not covered by substream {1}")]
    Uncovered(NodeId, usize),
    #[error("tree pointers of substream {0} contain a cycle")]
    Cycle(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Shape {
    pub order: Vec<NodeId>,
    /// Secondary edges keyed by their tree parent.
    pub pairs: BTreeMap<NodeId, NodeId>,
}

/// Positional view of a [`Shape`].
#[derive(Clone, Debug)]
pub struct ShapeTree {
    pub order: Vec<NodeId>,
    pub pos: HashMap<NodeId, usize>,
    pub parent: Vec<Option<usize>>,
    pub primary: Vec<Option<usize>>,
    pub secondary: Vec<Option<usize>>,
    /// Tree parent of a secondary child.
    pub pair_source: Vec<Option<usize>>,
    /// Last position of each subtree.
    pub end: Vec<usize>,
}

impl ShapeTree {
    pub fn new(shape: &Shape) -> Result<Self, ShapeError> {
        let n = shape.order.len();
        let mut pos = HashMap::with_capacity_and_hasher(n, Default::default());
        for (k, &id) in shape.order.iter().enumerate() {
            if pos.insert(id, k).is_some() {
                return Err(ShapeError::Duplicate(id));
            }
        }
        let mut pair_source = vec![None; n];
        let mut secondary = vec![None; n];
        for (&x, &s) in &shape.pairs {
            let px = *pos.get(&x).ok_or(ShapeError::Unknown(x))?;
            let ps = *pos.get(&s).ok_or(ShapeError::Unknown(s))?;
            if ps < px + 2 {
                return Err(ShapeError::BadPair(x, s));
            }
            if pair_source[ps].is_some() {
                return Err(ShapeError::DoubleTarget(s));
            }
            pair_source[ps] = Some(px);
            secondary[px] = Some(ps);
        }
        let mut parent = vec![None; n];
        let mut primary = vec![None; n];
        for k in 0..n {
            if let Some(x) = pair_source[k] {
                parent[k] = Some(x);
            } else if k > 0 {
                parent[k] = Some(k - 1);
                primary[k - 1] = Some(k);
            }
        }
        for k in 0..n {
            if secondary[k].is_some() && primary[k].is_none() {
                return Err(ShapeError::SecondaryWithoutPrimary(shape.order[k]));
            }
        }
        let mut end: Vec<usize> = (0..n).collect();
        for k in (0..n).rev() {
            end[k] = match (secondary[k], primary[k]) {
                (Some(s), _) => end[s],
                (None, Some(p)) => end[p],
                (None, None) => k,
            };
        }
        // Preorder must reproduce the path order, which rules out crossings.
        let mut stack = Vec::new();
        if n > 0 {
            stack.push(0);
        }
        let mut expect = 0;
        while let Some(k) = stack.pop() {
            if k != expect {
                return Err(ShapeError::Crossing(shape.order[k]));
            }
            expect += 1;
            if let Some(s) = secondary[k] {
                stack.push(s);
            }
            if let Some(p) = primary[k] {
                stack.push(p);
            }
        }
        Ok(ShapeTree { order: shape.order.clone(), pos, parent, primary, secondary, pair_source, end })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn degree(&self, k: usize) -> usize {
        self.primary[k].is_some() as usize + self.secondary[k].is_some() as usize
    }

    pub fn is_leaf(&self, k: usize) -> bool {
        self.degree(k) == 0
    }

    /// Redundant target of a leaf: the next position, or the server for the last one.
    pub fn redundant_target(&self, k: usize) -> Option<Option<usize>> {
        if !self.is_leaf(k) {
            None
        } else if k + 1 < self.len() {
            Some(Some(k + 1))
        } else {
            Some(None)
        }
    }

    pub fn subtree_size(&self, k: usize) -> usize {
        self.end[k] - k + 1
    }

    /// Top of the degree-one chain ending at leaf `k`.
    pub fn chain_top(&self, leaf: usize) -> usize {
        let mut top = leaf;
        while let Some(p) = self.parent[top] {
            if self.degree(p) == 1 {
                top = p;
            } else {
                break;
            }
        }
        top
    }

    /// Every leaf's chain as `(positions top..=leaf, associated degree-two position)`.
    /// The tail chain has no association.
    pub fn chains(&self) -> Vec<(Vec<usize>, Option<usize>)> {
        let mut out = Vec::new();
        for leaf in 0..self.len() {
            if !self.is_leaf(leaf) {
                continue;
            }
            let top = self.chain_top(leaf);
            let chain: Vec<usize> = (top..=leaf).collect();
            let assoc = match self.redundant_target(leaf) {
                Some(Some(s)) => self.pair_source[s],
                _ => None,
            };
            out.push((chain, assoc));
        }
        out
    }
}

impl Shape {
    pub fn chain(order: Vec<NodeId>) -> Self {
        Shape { order, pairs: BTreeMap::new() }
    }

    /// The unique balanced shape on `ids` for `m` substreams: subtrees of at
    /// most the chain limit are chains, larger ones split at the ceiling label.
    pub fn canonical(ids: &[NodeId], m: usize) -> Self {
        let mut shape = Shape::chain(ids.to_vec());
        if ids.len() >= m + 2 {
            split(&mut shape, 0, ids.len(), super::chain_max(m));
        }
        shape
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn tree(&self) -> Result<ShapeTree, ShapeError> {
        ShapeTree::new(self)
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        self.tree().map(|_| ())
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.order.iter().position(|&x| x == id)
    }

    /// Prunes `dead` peers. Survivors keep their cycle order; a secondary edge
    /// whose child died moves to the first survivor of that subtree, and
    /// collapses into a primary edge when that survivor directly follows the parent.
    pub fn remove_dead(&self, dead: &BTreeSet<NodeId>) -> Result<Shape, ShapeError> {
        let tree = self.tree()?;
        let order: Vec<NodeId> = self.order.iter().copied().filter(|p| !dead.contains(p)).collect();
        let new_pos: HashMap<NodeId, usize> = order.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let mut pairs = BTreeMap::new();
        for (&x, &s) in &self.pairs {
            if dead.contains(&x) {
                continue;
            }
            let px = tree.pos[&x];
            let ps = tree.pos[&s];
            let first_alive = (ps..=tree.end[px]).map(|k| self.order[k]).find(|p| !dead.contains(p));
            if let Some(t) = first_alive {
                if new_pos[&t] > new_pos[&x] + 1 {
                    pairs.insert(x, t);
                }
            }
        }
        let out = Shape { order, pairs };
        out.validate()?;
        Ok(out)
    }

    /// Inserts `w` at path position `k`. With `take_slot`, a secondary edge
    /// into the current occupant of `k` is handed to `w`.
    pub fn insert_at(&self, k: usize, w: NodeId, take_slot: bool) -> Result<Shape, ShapeError> {
        let mut out = self.clone();
        if take_slot && k < self.order.len() {
            let u = self.order[k];
            if let Some((&x, _)) = self.pairs.iter().find(|(_, &s)| s == u) {
                out.pairs.insert(x, w);
            }
        }
        out.order.insert(k, w);
        out.validate()?;
        Ok(out)
    }

    /// Makes `s` the secondary child of `v`, dropping `v`'s old secondary edge
    /// and every edge that would cross the new one. Returns the dropped pairs.
    pub fn set_secondary(&self, v: NodeId, s: NodeId) -> Result<(Shape, Vec<(NodeId, NodeId)>), ShapeError> {
        let tree = self.tree()?;
        let pv = *tree.pos.get(&v).ok_or(ShapeError::Unknown(v))?;
        let ps = *tree.pos.get(&s).ok_or(ShapeError::Unknown(s))?;
        if ps < pv + 2 {
            return Err(ShapeError::BadPair(v, s));
        }
        let mut out = self.clone();
        let mut dropped = Vec::new();
        for (&x, &y) in &self.pairs {
            let (px, py) = (tree.pos[&x], tree.pos[&y]);
            let crosses = (px < pv && pv < py && py < ps) || (pv < px && px < ps && ps < py);
            if x == v || y == s || crosses || px + 1 == ps {
                out.pairs.remove(&x);
                if x != v {
                    dropped.push((x, y));
                }
            }
        }
        out.pairs.insert(v, s);
        out.validate()?;
        Ok((out, dropped))
    }

    pub fn break_secondary(&self, v: NodeId) -> Shape {
        let mut out = self.clone();
        out.pairs.remove(&v);
        out
    }

    /// Induced-balance rotation: every degree-two peer moves to the leaf of its
    /// associated chain, and that chain shifts up by one position with its top
    /// taking the degree-two slot. The tail chain stays in place.
    pub fn rotate(&self) -> Result<Shape, ShapeError> {
        let tree = self.tree()?;
        let mut occupant: Vec<usize> = (0..tree.len()).collect();
        for (chain, assoc) in tree.chains() {
            let Some(d) = assoc else { continue };
            occupant[d] = chain[0];
            for w in chain.windows(2) {
                occupant[w[0]] = w[1];
            }
            occupant[*chain.last().expect("nonempty chain")] = d;
        }
        let order: Vec<NodeId> = occupant.iter().map(|&k| self.order[k]).collect();
        let pairs = self.pairs.iter().map(|(x, s)| (order[tree.pos[x]], order[tree.pos[s]])).collect();
        let out = Shape { order, pairs };
        out.validate()?;
        Ok(out)
    }

    /// Reads the tree of every root of substream `i`.
    pub fn from_overlay(g: &GlobalOverlay, i: usize) -> Result<Vec<Shape>, ShapeError> {
        let mut seen = BTreeSet::new();
        let mut shapes = Vec::new();
        for &root in &g.roots[i] {
            let mut shape = Shape::default();
            let mut stack = vec![root];
            while let Some(v) = stack.pop() {
                if !seen.insert(v) {
                    return Err(ShapeError::Cycle(i));
                }
                let sv = &g.peers.get(&v).ok_or(ShapeError::Unknown(v))?.substreams[i];
                shape.order.push(v);
                if let Some(s) = sv.child_secondary {
                    shape.pairs.insert(v, s);
                    stack.push(s);
                }
                if let Some(p) = sv.child_primary {
                    stack.push(p);
                }
            }
            shapes.push(shape);
        }
        if let Some(&p) = g.peers.keys().find(|p| !seen.contains(p)) {
            return Err(ShapeError::Uncovered(p, i));
        }
        for shape in &shapes {
            shape.validate()?;
        }
        Ok(shapes)
    }
}

fn split(shape: &mut Shape, lo: usize, hi: usize, chain_max: usize) {
    let size = hi - lo;
    if size <= chain_max {
        return;
    }
    let left = size.div_ceil(2) - 1;
    let sec = lo + 1 + left;
    shape.pairs.insert(shape.order[lo], shape.order[sec]);
    split(shape, lo + 1, sec, chain_max);
    split(shape, sec, hi, chain_max);
}

/// Sets every pointer of substream `i` from `shapes`, one tree per root.
pub(super) fn apply(g: &mut GlobalOverlay, i: usize, shapes: &[Shape]) -> Result<(), ShapeError> {
    let mut covered = BTreeSet::new();
    let trees: Vec<ShapeTree> = shapes.iter().map(ShapeTree::new).collect::<Result<_, _>>()?;
    for tree in &trees {
        for &p in &tree.order {
            if !g.peers.contains_key(&p) {
                return Err(ShapeError::Unknown(p));
            }
            if !covered.insert(p) {
                return Err(ShapeError::Duplicate(p));
            }
        }
    }
    if let Some(&p) = g.peers.keys().find(|p| !covered.contains(p)) {
        return Err(ShapeError::Uncovered(p, i));
    }
    g.roots[i] = trees.iter().filter(|t| !t.is_empty()).map(|t| t.order[0]).collect();
    for tree in &trees {
        let at = |k: usize| tree.order[k];
        for k in 0..tree.len() {
            let sv = g.view_mut(at(k), i);
            sv.parent_tree = Some(tree.parent[k].map_or(Endpoint::Server, |p| at(p).into()));
            sv.parent_redundant = tree.pair_source[k].map(|_| at(k - 1));
            sv.child_primary = tree.primary[k].map(at);
            sv.child_secondary = tree.secondary[k].map(at);
            sv.child_redundant = tree.redundant_target(k).map(|t| t.map_or(Endpoint::Server, |s| at(s).into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: u32) -> Vec<NodeId> {
        (1..=n).map(NodeId).collect()
    }

    fn pairs(shape: &Shape) -> Vec<(u32, u32)> {
        shape.pairs.iter().map(|(a, b)| (a.0, b.0)).collect()
    }

    #[test]
    fn canonical_eleven_three() {
        let s = Shape::canonical(&ids(11), 3);
        assert_eq!(pairs(&s), vec![(1, 7), (2, 5), (7, 10)]);
    }

    #[test]
    fn small_population_is_a_chain() {
        assert!(Shape::canonical(&ids(4), 3).pairs.is_empty());
        assert!(Shape::canonical(&ids(3), 2).pairs.is_empty());
    }

    #[test]
    fn crossing_pairs_rejected() {
        let mut s = Shape::chain(ids(8));
        s.pairs.insert(NodeId(1), NodeId(5));
        s.pairs.insert(NodeId(3), NodeId(7));
        assert!(s.validate().is_err());
    }

    #[test]
    fn adjacent_pair_rejected() {
        let mut s = Shape::chain(ids(4));
        s.pairs.insert(NodeId(2), NodeId(3));
        assert_eq!(s.validate(), Err(ShapeError::BadPair(NodeId(2), NodeId(3))));
    }

    #[test]
    fn rotation_of_eleven_three() {
        let g1 = Shape::canonical(&ids(11), 3);
        let g2 = g1.rotate().unwrap();
        let deg2: Vec<u32> = g2.pairs.keys().map(|k| k.0).collect();
        assert_eq!(deg2, vec![3, 5, 8]);
        let g3 = g2.rotate().unwrap();
        let deg2: Vec<u32> = g3.pairs.keys().map(|k| k.0).collect();
        assert_eq!(deg2, vec![4, 6, 9]);
    }

    #[test]
    fn departure_of_secondary_child_repoints() {
        let s = Shape::canonical(&ids(11), 3);
        let dead = BTreeSet::from([NodeId(5)]);
        let r = s.remove_dead(&dead).unwrap();
        assert_eq!(pairs(&r), vec![(1, 7), (2, 6), (7, 10)]);
    }

    #[test]
    fn departure_next_to_parent_collapses() {
        let s = Shape::canonical(&ids(11), 3);
        let dead = BTreeSet::from([NodeId(6)]);
        let r = s.remove_dead(&dead).unwrap();
        assert_eq!(pairs(&r), vec![(1, 7), (2, 5), (7, 10)]);
        let tree = r.tree().unwrap();
        assert_eq!(tree.redundant_target(tree.pos[&NodeId(5)]), Some(Some(tree.pos[&NodeId(7)])));
    }

    #[test]
    fn set_secondary_drops_crossings() {
        let s = Shape::canonical(&ids(11), 3);
        let (r, dropped) = s.set_secondary(NodeId(1), NodeId(6)).unwrap();
        assert!(dropped.is_empty());
        assert_eq!(pairs(&r), vec![(1, 6), (2, 5), (7, 10)]);
        let (r, dropped) = s.set_secondary(NodeId(1), NodeId(4)).unwrap();
        assert_eq!(dropped, vec![(NodeId(2), NodeId(5))]);
        assert_eq!(pairs(&r), vec![(1, 4), (7, 10)]);
    }
}
