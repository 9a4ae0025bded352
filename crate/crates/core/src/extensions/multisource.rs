use crate::overlay::{GlobalOverlay, NodeId, Shape, ShapeError, StreamConfig};
use crate::simulator::{bootstrap_steady, refresh_overlay};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MultiSourceError {
    #[error("substream {substream}: {peers} peers cannot fill {sources} trees")]
    TooFewPeers { substream: usize, peers: usize, sources: usize },
    #[error("expected {expected} per-substream source counts, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("substream {0} has no source")]
    NoSource(usize),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Splits `n` into `k` sizes that differ by at most one, larger first.
pub fn even_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|b| n / k + usize::from(b < n % k)).collect()
}

/// Steady state with `k[i]` sources in substream `i`. Peers `1..=n` are cut
/// into consecutive blocks of near-equal size; each block carries the shape
/// the single-source construction gives it, so labels run on across blocks
/// and the tail of each block relays control labels to the next block's root.
pub fn multi_source_bootstrap(cfg: &StreamConfig, k: &[usize]) -> Result<GlobalOverlay, MultiSourceError> {
    if k.len() != cfg.m {
        return Err(MultiSourceError::Arity { expected: cfg.m, got: k.len() });
    }
    if k.iter().all(|&x| x == 1) {
        return Ok(bootstrap_steady(cfg));
    }
    let sizes: Vec<Vec<usize>> = k.iter().map(|&ki| even_sizes(cfg.n_initial, ki)).collect();
    multi_source_with_sizes(cfg, &sizes)
}

/// Like [`multi_source_bootstrap`] with explicit tree sizes per substream.
pub fn multi_source_with_sizes(cfg: &StreamConfig, sizes: &[Vec<usize>]) -> Result<GlobalOverlay, MultiSourceError> {
    if sizes.len() != cfg.m {
        return Err(MultiSourceError::Arity { expected: cfg.m, got: sizes.len() });
    }
    let mut g = GlobalOverlay::empty(cfg.m);
    let ids: Vec<NodeId> = (0..cfg.n_initial).map(|_| g.add_peer()).collect();
    for (i, sz) in sizes.iter().enumerate() {
        if sz.is_empty() {
            return Err(MultiSourceError::NoSource(i));
        }
        if sz.contains(&0) || sz.iter().sum::<usize>() != ids.len() {
            return Err(MultiSourceError::TooFewPeers { substream: i, peers: ids.len(), sources: sz.len() });
        }
        let mut start = 0;
        let mut forest = Vec::with_capacity(sz.len());
        for &len in sz {
            let mut shape = Shape::canonical(&ids[start..start + len], cfg.m);
            for _ in 0..i {
                shape = shape.rotate()?;
            }
            forest.push(shape);
            start += len;
        }
        g.apply_shapes(i, &forest)?;
        relabel(&mut g, i)?;
    }
    refresh_overlay(&mut g, cfg);
    Ok(g)
}

fn relabel(g: &mut GlobalOverlay, i: usize) -> Result<(), ShapeError> {
    for (k, p) in g.shapes(i)?.iter().flat_map(|s| s.order.clone()).enumerate() {
        g.view_mut(p, i).label = k as u32 + 1;
    }
    Ok(())
}

/// Side channel from the last peer of a tree to its own root and to the next
/// tree's root, cyclically, carrying the labels the roots compare.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EndLink {
    pub end: NodeId,
    pub root: NodeId,
    pub next_root: NodeId,
}

pub fn end_links(g: &GlobalOverlay, i: usize) -> Result<Vec<EndLink>, ShapeError> {
    let shapes = g.shapes(i)?;
    let k = shapes.len();
    Ok(shapes
        .iter()
        .enumerate()
        .filter_map(|(t, s)| {
            Some(EndLink {
                end: *s.order.last()?,
                root: *s.order.first()?,
                next_root: *shapes[(t + 1) % k].order.first()?,
            })
        })
        .collect())
}

/// Sizes of the trees of substream `i` as their roots infer them: the gap
/// between a root's label and the next root's label, which the tail of each
/// tree relays; the last tree runs to `n`.
pub fn subtree_sizes(g: &GlobalOverlay, i: usize) -> Vec<usize> {
    let roots = &g.roots[i];
    roots
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let end = roots.get(k + 1).map_or(g.n() as u32 + 1, |&next| g.label(next, i));
            end.saturating_sub(g.label(r, i)) as usize
        })
        .collect()
}

/// Moves one boundary peer between adjacent trees of one substream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SizeDirective {
    pub substream: usize,
    pub from_tree: usize,
    pub to_tree: usize,
    pub peer: NodeId,
}

/// At most one directive: when the size gap exceeds one, the largest tree
/// hands a boundary peer to the neighbor on the side of the smallest tree.
pub fn subtree_size_rebalance(g: &GlobalOverlay, i: usize) -> Option<SizeDirective> {
    let sizes = subtree_sizes(g, i);
    let (&max, &min) = (sizes.iter().max()?, sizes.iter().min()?);
    if max <= min + 1 {
        return None;
    }
    let a = sizes.iter().position(|&s| s == max)?;
    let b = sizes.iter().position(|&s| s == min)?;
    let shapes = g.shapes(i).ok()?;
    let (to_tree, peer) = if b > a { (a + 1, *shapes[a].order.last()?) } else { (a - 1, shapes[a].order[0]) };
    Some(SizeDirective { substream: i, from_tree: a, to_tree, peer })
}

/// Applies a directive: a tail peer moving right becomes the next tree's root,
/// a root moving left becomes the previous tree's tail. Labels are renumbered.
pub fn apply_size_directive(g: &mut GlobalOverlay, d: &SizeDirective) -> Result<(), ShapeError> {
    let i = d.substream;
    let mut shapes = g.shapes(i)?;
    let gone = std::collections::BTreeSet::from([d.peer]);
    let from = shapes[d.from_tree].remove_dead(&gone)?;
    let to = &shapes[d.to_tree];
    let to =
        if d.to_tree > d.from_tree { to.insert_at(0, d.peer, false)? } else { to.insert_at(to.len(), d.peer, false)? };
    shapes[d.from_tree] = from;
    shapes[d.to_tree] = to;
    shapes.retain(|s| !s.is_empty());
    g.apply_shapes(i, &shapes)?;
    relabel(g, i)
}

/// Applies directives one per substream per round until none is emitted.
/// Returns the number of rounds that moved a peer.
pub fn rebalance_until_quiet(
    g: &mut GlobalOverlay,
    cfg: &StreamConfig,
    max_rounds: usize,
) -> Result<usize, ShapeError> {
    for round in 0..max_rounds {
        let directives: Vec<SizeDirective> = (0..g.m).filter_map(|i| subtree_size_rebalance(g, i)).collect();
        if directives.is_empty() {
            refresh_overlay(g, cfg);
            return Ok(round);
        }
        for d in &directives {
            apply_size_directive(g, d)?;
        }
    }
    refresh_overlay(g, cfg);
    Ok(max_rounds)
}
