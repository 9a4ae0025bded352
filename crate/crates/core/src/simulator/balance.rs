use super::engine::{RunError, Simulation};
use crate::overlay::{
    canonical_labels, control_labels, is_balanced_node, substream_balance_violations, ControlLabel, Endpoint,
    GlobalOverlay, NodeId, Shape, ShapeError, ShapeTree,
};
use crate::protocol::{
    induce_insert, induce_request, induce_respond, induced_balance_tick, BalanceTick, Message, ParentInfo, Position,
    RelayState, RequestContext, RequestOutcome,
};
use rustc_hash::FxHashMap as HashMap;
use std::collections::{BTreeMap, BTreeSet};

/// One induction exchange from `T_i` to `T_{i+1}`, advanced one stage per slot.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub age: u32,
    pub snapshot: Shape,
    pub states: BTreeMap<NodeId, RelayState>,
    pub inbox: BTreeMap<NodeId, Vec<Message>>,
}

fn request_context(
    g: &GlobalOverlay,
    i: usize,
    tree: &ShapeTree,
    k: usize,
    controls: &HashMap<NodeId, ControlLabel>,
    m: usize,
    may_create: bool,
) -> RequestContext {
    let at = |k: usize| tree.order[k];
    let parent = match tree.parent[k] {
        None => ParentInfo::Server,
        Some(pk) => {
            let degree = tree.degree(pk);
            let balanced = match tree.secondary[pk] {
                Some(s) => is_balanced_node(g.label(at(pk), i), controls[&at(pk)].value, g.label(at(s), i)),
                None => true,
            };
            ParentInfo::Peer { degree, balanced }
        }
    };
    RequestContext {
        control: controls[&at(k)],
        parent,
        secondary_label: tree.secondary[k].map(|s| g.label(at(s), i)),
        m,
        may_create,
    }
}

/// Builds the tree described by one round of insertion requests.
pub fn assemble_requests(requests: &[(NodeId, Endpoint, Position)]) -> Option<Shape> {
    let mut primary: HashMap<NodeId, NodeId> = HashMap::default();
    let mut secondary: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut root = None;
    for &(w, parent, flag) in requests {
        match (parent, flag) {
            (Endpoint::Server, _) => {
                if root.replace(w).is_some() {
                    return None;
                }
            }
            (Endpoint::Peer(p), Position::Primary) => {
                if primary.insert(p, w).is_some() {
                    return None;
                }
            }
            (Endpoint::Peer(p), Position::Secondary) => {
                if secondary.insert(p, w).is_some() {
                    return None;
                }
            }
        }
    }
    let mut order = Vec::with_capacity(requests.len());
    let mut seen = BTreeSet::new();
    let mut stack = vec![root?];
    while let Some(v) = stack.pop() {
        if !seen.insert(v) {
            return None;
        }
        order.push(v);
        if let Some(&s) = secondary.get(&v) {
            stack.push(s);
        }
        if let Some(&p) = primary.get(&v) {
            stack.push(p);
        }
    }
    if order.len() != requests.len() {
        return None;
    }
    let shape = Shape { order, pairs: secondary };
    shape.validate().ok()?;
    Some(shape)
}

impl Simulation {
    fn single_tree(&self, i: usize, round: u64) -> Result<Option<Shape>, RunError> {
        let mut shapes = self.overlay.shapes(i).map_err(|source| RunError::Structure { round, source })?;
        Ok(if shapes.len() == 1 { shapes.pop() } else { None })
    }

    /// `T_i` satisfies Property 3 and carries its preorder labels.
    pub fn tree_balanced(&self, i: usize) -> bool {
        if self.overlay.roots[i].len() != 1 || !substream_balance_violations(&self.overlay, &self.config, i).is_empty()
        {
            return false;
        }
        canonical_labels(&self.overlay, i).is_ok_and(|c| c.iter().all(|(p, &l)| self.overlay.label(*p, i) == l))
    }

    fn set_tree(&mut self, i: usize, shape: &Shape, round: u64) -> Result<(), RunError> {
        self.overlay
            .apply_shapes(i, std::slice::from_ref(shape))
            .map_err(|source| RunError::Structure { round, source })
    }

    pub(super) fn balance(&mut self, round: u64) -> Result<(), RunError> {
        let m = self.config.m;
        if self.overlay.n() < m + 2 || self.overlay.roots.iter().any(|r| r.len() != 1) {
            self.pipelines = vec![None; m];
            return Ok(());
        }
        if m >= 2 {
            for i in 0..m {
                if self.pipeline_step(i, round)? {
                    super::engine::refresh_controls(&mut self.overlay);
                }
            }
        }
        if self.chain_fix(round)? {
            super::engine::refresh_controls(&mut self.overlay);
        }
        self.balance_ticks(round)
    }

    /// Advances the pipeline out of `T_i`; true if a tree changed.
    fn pipeline_step(&mut self, i: usize, round: u64) -> Result<bool, RunError> {
        let Some(current) = self.single_tree(i, round)? else { return Ok(false) };
        let Some(mut p) = self.pipelines[i].take() else {
            if !self.tree_balanced(i) {
                return Ok(false);
            }
            let tree = current.tree().map_err(|source| RunError::Structure { round, source })?;
            let controls = control_labels(&self.overlay, i);
            let mut inbox: BTreeMap<NodeId, Vec<Message>> = BTreeMap::new();
            for k in 0..tree.len() {
                let v = tree.order[k];
                let ctx = request_context(&self.overlay, i, &tree, k, &controls, self.config.m, false);
                if let RequestOutcome::Request { to } = induce_request(self.overlay.view(v, i), &ctx) {
                    inbox.entry(to).or_default().push(Message::InduceRequest { substream: i, requester: v });
                }
            }
            self.pipelines[i] = Some(Pipeline { age: 0, snapshot: current, states: BTreeMap::new(), inbox });
            return Ok(false);
        };
        if p.snapshot != current {
            self.metrics.pipeline_aborts += 1;
            return Ok(false);
        }
        p.age += 1;
        for (v, msgs) in std::mem::take(&mut p.inbox) {
            let state = p.states.entry(v).or_default();
            for out in induce_respond(&self.overlay.peers[&v], i, state, &msgs) {
                if let Endpoint::Peer(q) = out.to {
                    p.inbox.entry(q).or_default().push(out.msg);
                }
            }
        }
        if p.age == 2 {
            let unmatched = p.snapshot.pairs.keys().any(|d| p.states.get(d).is_none_or(|s| s.replacement.is_none()));
            if unmatched {
                self.metrics.pipeline_aborts += 1;
                return Ok(false);
            }
        }
        if p.age < 4 {
            self.pipelines[i] = Some(p);
            return Ok(false);
        }
        self.commit_induction(i, &p, round)
    }

    fn commit_induction(&mut self, i: usize, p: &Pipeline, round: u64) -> Result<bool, RunError> {
        let m = self.config.m;
        let target = (i + 1) % m;
        let mut requests = Vec::with_capacity(p.snapshot.len());
        for &v in &p.snapshot.order {
            let state = p.states.get(&v).cloned().unwrap_or_default();
            if let Message::InsertRequest { inserter, parent, flag, .. } =
                induce_insert(&self.overlay.peers[&v], i, m, &state).msg
            {
                requests.push((inserter, parent, flag));
            }
        }
        let Some(candidate) = assemble_requests(&requests) else {
            self.metrics.pipeline_aborts += 1;
            return Ok(false);
        };
        let Some(existing) = self.single_tree(target, round)? else { return Ok(false) };
        if candidate == existing || (target == 0 && self.tree_balanced(0)) {
            return Ok(false);
        }
        let incoming: BTreeSet<NodeId> = candidate.pairs.keys().copied().collect();
        if target != 0 {
            let anchor = self.single_tree(0, round)?;
            if anchor.is_some_and(|a| a.pairs.keys().any(|x| incoming.contains(x))) {
                self.metrics.pipeline_aborts += 1;
                return Ok(false);
            }
        }
        for j in (0..m).filter(|&j| j != target) {
            let Some(tree) = self.single_tree(j, round)? else { continue };
            let clashes: Vec<NodeId> = tree.pairs.keys().filter(|x| incoming.contains(x)).copied().collect();
            if clashes.is_empty() {
                continue;
            }
            let mut fixed = tree;
            for x in clashes {
                fixed = fixed.break_secondary(x);
                self.metrics.secondaries_broken += 1;
            }
            self.set_tree(j, &fixed, round)?;
        }
        self.set_tree(target, &candidate, round)?;
        for (k, &v) in candidate.order.iter().enumerate() {
            self.overlay.view_mut(v, target).label = k as u32 + 1;
        }
        self.metrics.pipeline_commits += 1;
        Ok(true)
    }

    fn chain_fix(&mut self, round: u64) -> Result<bool, RunError> {
        let mut changed = false;
        let err = |source: ShapeError| RunError::Structure { round, source };
        for i in 0..self.config.m {
            let Some(shape) = self.single_tree(i, round)? else { continue };
            let tree = shape.tree().map_err(err)?;
            let controls = control_labels(&self.overlay, i);
            let mut creates = Vec::new();
            let mut breaks = Vec::new();
            for k in 0..tree.len() {
                let v = tree.order[k];
                let ctx = request_context(&self.overlay, i, &tree, k, &controls, self.config.m, i == 0);
                match induce_request(self.overlay.view(v, i), &ctx) {
                    RequestOutcome::CreateSecondary { target_label } => creates.push((v, target_label)),
                    RequestOutcome::BreakSecondary => breaks.push(v),
                    RequestOutcome::Request { .. } | RequestOutcome::None => {}
                }
            }
            if creates.is_empty() && breaks.is_empty() {
                continue;
            }
            let mut next = shape.clone();
            for v in breaks {
                next = next.break_secondary(v);
                self.metrics.secondaries_broken += 1;
            }
            let mut created = Vec::new();
            for (v, label) in creates {
                let Some(u) = self.overlay.lookup_label(i, label) else { continue };
                if let Ok((s, _)) = next.set_secondary(v, u) {
                    next = s;
                    created.push(v);
                    self.metrics.secondaries_created += 1;
                }
            }
            self.set_tree(i, &next, round)?;
            changed = true;
            for v in created {
                self.drop_degree_two_elsewhere(v, i, round)?;
            }
        }
        Ok(changed)
    }

    /// Keeps `v` degree two only in `T_keep`.
    fn drop_degree_two_elsewhere(&mut self, v: NodeId, keep: usize, round: u64) -> Result<(), RunError> {
        for j in (0..self.config.m).filter(|&j| j != keep) {
            if self.overlay.view(v, j).child_secondary.is_none() {
                continue;
            }
            let Some(tree) = self.single_tree(j, round)? else { continue };
            self.set_tree(j, &tree.break_secondary(v), round)?;
            self.metrics.secondaries_broken += 1;
        }
        Ok(())
    }

    fn balance_ticks(&mut self, round: u64) -> Result<(), RunError> {
        for j in 1..self.config.m {
            for pv in self.overlay.peers.values_mut() {
                pv.substreams[j].balance_timer = 0;
            }
        }
        let Some(shape) = self.single_tree(0, round)? else { return Ok(()) };
        let tree = shape.tree().map_err(|source| RunError::Structure { round, source })?;
        let controls = control_labels(&self.overlay, 0);
        let threshold = self.config.balance_threshold();
        let mut fires = Vec::new();
        for k in 0..tree.len() {
            let v = tree.order[k];
            if tree.degree(k) != 2 {
                self.overlay.view_mut(v, 0).balance_timer = 0;
                continue;
            }
            let ctx = request_context(&self.overlay, 0, &tree, k, &controls, self.config.m, true);
            let sv = self.overlay.view(v, 0);
            match induced_balance_tick(sv, ctx.control, ctx.secondary_label, ctx.parent, threshold) {
                BalanceTick::Reset => self.overlay.view_mut(v, 0).balance_timer = 0,
                BalanceTick::Increment => self.overlay.view_mut(v, 0).balance_timer += 1,
                BalanceTick::Fire { target_label } => {
                    self.overlay.view_mut(v, 0).balance_timer = 0;
                    fires.push((v, shape.pairs[&v], target_label));
                }
                BalanceTick::Wait => {}
            }
        }
        if fires.is_empty() {
            return Ok(());
        }
        let mut next = shape;
        for (v, old, label) in fires {
            if next.pairs.get(&v) != Some(&old) {
                continue;
            }
            let Some(u) = self.overlay.lookup_label(0, label) else { continue };
            if let Ok((s, _)) = next.set_secondary(v, u) {
                next = s;
                self.metrics.balance_fires += 1;
            }
        }
        self.set_tree(0, &next, round)
    }
}
