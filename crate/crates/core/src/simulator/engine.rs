use super::balance::Pipeline;
use super::measure::{measure_delay, peer_rates};
use super::scenario::{ChurnEvent, ChurnScenario, Contact, EventKind};
use super::trace::{RoundRecord, RunMetrics};
use crate::overlay::{
    canonical_labels, check_consistency, check_property1, check_property2, control_labels, is_steady_state,
    substream_balance_violations, ConfigError, ControlLabel, Endpoint, GlobalOverlay, NodeId, PropertyViolation, Shape,
    ShapeError, StreamConfig, SubstreamView,
};
use crate::protocol::{
    apply_label_update, forward, handle_arrival, handle_departure, insert_reply, label_consistency, stamp, ArrivalMove,
    DepartureAction, LabelUpdate, Message, ProtocolFault,
};
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap as HashMap;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RunError {
    #[error("round {round}: invalid event: {detail}")]
    InvalidEvent { round: u64, detail: String },
    #[error("round {round}: property {} violated: {violation}", violation.property())]
    Invariant { round: u64, violation: PropertyViolation },
    #[error("round {round}: {fault}")]
    Fault { round: u64, fault: ProtocolFault },
    #[error("round {round}: broken structure: {source}")]
    Structure { round: u64, source: ShapeError },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Slotted-round engine over one overlay.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub config: StreamConfig,
    pub overlay: GlobalOverlay,
    pub metrics: RunMetrics,
    pub records: Vec<RoundRecord>,
    /// Stop with [`RunError::Invariant`] on the first Property 1 or 2 breach.
    pub halt_on_violation: bool,
    /// Reject departure blocks larger than `K` or not connected.
    pub checked: bool,
    /// Skip rate, delay and Property 3 measurement; records carry placeholders.
    pub lean: bool,
    /// Capacities handed to newcomers, by the id they will receive.
    pub capacities: BTreeMap<NodeId, Rational64>,
    /// Rounds in which each peer received less than the full rate.
    pub deficit_rounds: BTreeMap<NodeId, usize>,
    /// Largest hop distance each peer has seen in any substream.
    pub worst_delay: BTreeMap<NodeId, u32>,
    /// All-cast requests seen so far, as `(round, source)`.
    pub allcasts: Vec<(u64, NodeId)>,
    /// Consecutive rounds without topology changes.
    pub quiet_rounds: u64,
    pub last_change_round: u64,
    pub(super) pipelines: Vec<Option<Pipeline>>,
    rng: ChaCha8Rng,
}

fn structure(round: u64) -> impl Fn(ShapeError) -> RunError {
    move |source| RunError::Structure { round, source }
}

type Pointers = (Option<Endpoint>, Option<NodeId>, Option<NodeId>, Option<NodeId>, Option<Endpoint>);

fn pointers(sv: &SubstreamView) -> Pointers {
    (sv.parent_tree, sv.parent_redundant, sv.child_primary, sv.child_secondary, sv.child_redundant)
}

/// Number of `(peer, substream)` pairs of `after` whose pointers differ from `before`.
pub(super) fn topology_deltas(before: &GlobalOverlay, after: &GlobalOverlay) -> usize {
    let mut count = 0;
    for (id, pv) in &after.peers {
        for (i, sv) in pv.substreams.iter().enumerate() {
            match before.peers.get(id) {
                Some(old) if pointers(&old.substreams[i]) == pointers(sv) => {}
                _ => count += 1,
            }
        }
    }
    count
}

fn flat_order(shapes: &[Shape]) -> Vec<NodeId> {
    shapes.iter().flat_map(|s| s.order.iter().copied()).collect()
}

/// Rebuilds every peer's cycle-ancestor memory from the current orders.
pub(crate) fn refresh_memory(g: &mut GlobalOverlay, cfg: &StreamConfig) {
    let depth = cfg.ancestors_per_substream();
    for i in 0..g.m {
        let Ok(shapes) = g.shapes(i) else { continue };
        for shape in &shapes {
            for (k, &p) in shape.order.iter().enumerate() {
                let mut mem = Vec::with_capacity(depth);
                for d in 2..=depth + 1 {
                    if d > k {
                        mem.push(Endpoint::Server);
                        break;
                    }
                    mem.push(shape.order[k - d].into());
                }
                g.peers.get_mut(&p).expect("live").address_memory[i] = mem;
            }
        }
    }
}

/// Stores the control label each peer receives under the current labels.
pub(crate) fn refresh_controls(g: &mut GlobalOverlay) {
    for i in 0..g.m {
        let controls = control_labels(g, i);
        for (p, l) in controls {
            g.view_mut(p, i).last_control_label = Some(l);
        }
    }
}

/// Rebuilds memories and stored control labels from the current shapes.
pub fn refresh_overlay(g: &mut GlobalOverlay, cfg: &StreamConfig) {
    refresh_memory(g, cfg);
    refresh_controls(g);
}

/// Canonical steady state: the balanced shape on peers `1..=n` in `T_1`, each
/// further tree the induced rotation of the previous one, labels in preorder.
pub fn bootstrap_steady(cfg: &StreamConfig) -> GlobalOverlay {
    let mut g = GlobalOverlay::empty(cfg.m);
    let ids: Vec<NodeId> = (0..cfg.n_initial).map(|_| g.add_peer()).collect();
    if ids.is_empty() {
        return g;
    }
    let mut shape = Shape::canonical(&ids, cfg.m);
    for i in 0..cfg.m {
        if i > 0 {
            shape = shape.rotate().expect("canonical shapes rotate");
        }
        g.apply_shapes(i, std::slice::from_ref(&shape)).expect("shape covers every peer");
        for (k, &p) in shape.order.iter().enumerate() {
            g.view_mut(p, i).label = k as u32 + 1;
        }
    }
    refresh_memory(&mut g, cfg);
    refresh_controls(&mut g);
    g
}

#[derive(Clone, Debug)]
pub struct ArrivalBootstrap {
    pub overlay: GlobalOverlay,
    pub records: Vec<RoundRecord>,
    pub metrics: RunMetrics,
    /// Rounds after the last arrival until the last topology change, if the
    /// run went quiet within the round limit.
    pub quiescence: Option<u64>,
}

/// Builds the overlay by `n_initial` arrivals through random contacts, one per
/// round, then runs without events until quiescent.
pub fn bootstrap_by_arrivals(cfg: &StreamConfig, seed: u64) -> Result<ArrivalBootstrap, RunError> {
    cfg.validate()?;
    let mut sim = Simulation::new(cfg.clone(), GlobalOverlay::empty(cfg.m), seed);
    let n = cfg.n_initial as u64;
    for round in 1..=n {
        sim.step(&[ChurnEvent { round, kind: EventKind::Arrive(Contact::Random) }])?;
    }
    let limit = n + 40 * cfg.balance_threshold() as u64 + 20 * n;
    while sim.overlay.round < limit && !sim.is_quiescent() {
        sim.step(&[])?;
    }
    let quiescence = sim.is_quiescent().then(|| sim.last_change_round.saturating_sub(n));
    sim.finish(n);
    Ok(ArrivalBootstrap { overlay: sim.overlay, records: sim.records, metrics: sim.metrics, quiescence })
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub overlay: GlobalOverlay,
    pub records: Vec<RoundRecord>,
}

/// Executes a scenario from the canonical steady state on `n_initial` peers.
pub fn run(scenario: &ChurnScenario) -> Result<RunOutput, RunError> {
    let mut sim = Simulation::from_scenario(scenario)?;
    for round in 1..=scenario.horizon {
        sim.step(&scenario.events_at(round))?;
    }
    let last_event = scenario.events.last().map_or(0, |e| e.round);
    sim.finish(last_event);
    Ok(RunOutput { metrics: sim.metrics, overlay: sim.overlay, records: sim.records })
}

impl Simulation {
    pub fn new(config: StreamConfig, overlay: GlobalOverlay, seed: u64) -> Self {
        let m = config.m;
        Simulation {
            config,
            overlay,
            metrics: RunMetrics::default(),
            records: Vec::new(),
            halt_on_violation: true,
            lean: false,
            checked: true,
            capacities: BTreeMap::new(),
            deficit_rounds: BTreeMap::new(),
            worst_delay: BTreeMap::new(),
            allcasts: Vec::new(),
            quiet_rounds: 0,
            last_change_round: 0,
            pipelines: vec![None; m],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_scenario(scenario: &ChurnScenario) -> Result<Self, RunError> {
        scenario.config.validate()?;
        let mut g = bootstrap_steady(&scenario.config);
        for (id, cap) in &scenario.capacities {
            if let Some(pv) = g.peers.get_mut(id) {
                pv.capacity = *cap;
            }
        }
        let mut sim = Simulation::new(scenario.config.clone(), g, scenario.seed);
        sim.capacities = scenario.capacities.clone();
        Ok(sim)
    }

    /// Rounds of silence needed before the topology counts as settled.
    pub fn quiescence_window(&self) -> u64 {
        let depth = measure_delay(&self.overlay).overall.unwrap_or(0) as u64;
        2 * self.config.balance_threshold() as u64 + depth
    }

    pub fn is_quiescent(&self) -> bool {
        self.quiet_rounds >= self.quiescence_window()
    }

    /// Fills the end-of-run fields of the metrics.
    pub fn finish(&mut self, last_event_round: u64) {
        self.metrics.rounds = self.overlay.round;
        self.metrics.steady_at_end = is_steady_state(&self.overlay, &self.config);
        self.metrics.rounds_to_quiescence =
            self.is_quiescent().then(|| self.last_change_round.saturating_sub(last_event_round));
    }

    fn validate_block(&self, round: u64, ids: &[NodeId], dead: &BTreeSet<NodeId>) -> Result<(), RunError> {
        let bad = |detail: String| RunError::InvalidEvent { round, detail };
        if ids.is_empty() {
            return Err(bad("empty departure block".into()));
        }
        for p in ids {
            if !self.overlay.contains(*p) || dead.contains(p) {
                return Err(bad(format!("peer {p} is not live")));
            }
        }
        if !self.checked {
            return Ok(());
        }
        if !dead.is_empty() {
            return Err(bad("one departure block per round".into()));
        }
        if ids.len() > self.config.k_block {
            return Err(bad(format!("block of {} exceeds K = {}", ids.len(), self.config.k_block)));
        }
        let block: BTreeSet<NodeId> = ids.iter().copied().collect();
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for i in 0..self.overlay.m {
            for e in self.overlay.edges(i) {
                if let (Endpoint::Peer(a), Endpoint::Peer(b)) = (e.from, e.to) {
                    if block.contains(&a) && block.contains(&b) {
                        adj.entry(a).or_default().push(b);
                        adj.entry(b).or_default().push(a);
                    }
                }
            }
        }
        let mut seen = BTreeSet::from([ids[0]]);
        let mut queue = VecDeque::from([ids[0]]);
        while let Some(u) = queue.pop_front() {
            for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        if seen.len() != block.len() {
            return Err(bad("departure block is not connected".into()));
        }
        Ok(())
    }

    /// Runs one slot with the given events.
    pub fn step(&mut self, events: &[ChurnEvent]) -> Result<RoundRecord, RunError> {
        let m = self.config.m;
        let round = self.overlay.round + 1;
        self.overlay.round = round;
        let err = structure(round);
        for pv in self.overlay.peers.values_mut() {
            pv.applied_update_stamps.clear();
        }

        // Churn events.
        let mut dead = BTreeSet::new();
        let mut arrival = None;
        let mut tags = Vec::new();
        for e in events {
            match &e.kind {
                EventKind::Depart(ids) => {
                    self.validate_block(round, ids, &dead)?;
                    dead.extend(ids.iter().copied());
                    let ids: Vec<String> = ids.iter().map(|p| p.to_string()).collect();
                    tags.push(format!("depart:{}", ids.join(",")));
                }
                EventKind::Arrive(c) => {
                    if arrival.replace(*c).is_some() {
                        return Err(RunError::InvalidEvent { round, detail: "one arrival per round".into() });
                    }
                }
                EventKind::AllCast(src) => {
                    if !self.overlay.contains(*src) {
                        return Err(RunError::InvalidEvent {
                            round,
                            detail: format!("all-cast source {src} is not live"),
                        });
                    }
                    self.allcasts.push((round, *src));
                    tags.push(format!("allcast:{src}"));
                }
            }
        }
        let before = self.overlay.clone();
        let lean = self.lean;
        let slot = if lean { BTreeMap::new() } else { peer_rates(&before, &self.config, &dead, &BTreeSet::new()) };

        // Departure repair.
        let mut shapes: Vec<Vec<Shape>> = (0..m).map(|i| before.shapes(i)).collect::<Result<_, _>>().map_err(&err)?;
        let before_orders: Vec<Vec<NodeId>> = shapes.iter().map(|s| flat_order(s)).collect();
        let mut promoted = BTreeSet::new();
        let mut reentries = 0;
        if !dead.is_empty() {
            for (&v, pv) in &before.peers {
                if dead.contains(&v) {
                    continue;
                }
                for i in 0..m {
                    match handle_departure(pv, i, &|p| dead.contains(&p)) {
                        DepartureAction::Promote { .. } => {
                            promoted.insert((v, i));
                        }
                        DepartureAction::ReEntry => reentries += 1,
                        DepartureAction::Reattach { .. } | DepartureAction::None => {}
                    }
                }
            }
            for p in &dead {
                self.overlay.peers.remove(p);
            }
            for (i, forest) in shapes.iter_mut().enumerate() {
                let repaired: Vec<Shape> =
                    forest.iter().map(|s| s.remove_dead(&dead)).collect::<Result<_, _>>().map_err(&err)?;
                *forest = repaired.into_iter().filter(|s| !s.is_empty()).collect();
                self.overlay.apply_shapes(i, forest).map_err(&err)?;
            }
        }

        // Arrival.
        let mut newcomer: Option<(NodeId, Vec<u32>)> = None;
        if let Some(contact) = arrival {
            let survivors: Vec<NodeId> = self.overlay.peers.keys().copied().collect();
            let c = match contact {
                Contact::Peer(c) => Some(c).filter(|c| self.overlay.contains(*c)),
                Contact::Random if survivors.is_empty() => None,
                Contact::Random => Some(survivors[self.rng.gen_range(0..survivors.len())]),
            };
            let controls: Vec<HashMap<NodeId, ControlLabel>> =
                (0..m).map(|i| control_labels(&self.overlay, i)).collect();
            let plan = handle_arrival(c.map(|c| &self.overlay.peers[&c]), NodeId(self.overlay.next_id), m);
            let w = self.overlay.add_peer();
            if let Some(cap) = self.capacities.get(&w) {
                self.overlay.peers.get_mut(&w).expect("new").capacity = *cap;
            }
            let mut basis = Vec::with_capacity(m);
            for (i, mv) in plan.moves.iter().enumerate() {
                let (forest, x) = self.insert_newcomer(i, w, c, mv, &shapes[i], &controls[i]);
                shapes[i] = forest;
                basis.push(x);
            }
            for (i, forest) in shapes.iter().enumerate() {
                self.overlay.apply_shapes(i, forest).map_err(&err)?;
                self.overlay.view_mut(w, i).label = basis[i];
            }
            tags.push(format!("arrive:{w}@{}", c.map_or_else(|| "S".to_string(), |c| c.to_string())));
            newcomer = Some((w, basis));
            self.metrics.arrivals += 1;
        }
        let repairs = topology_deltas(&before, &self.overlay);

        // Label updates, then the consistency sweep.
        let mut updates: Vec<(NodeId, LabelUpdate)> = Vec::new();
        for &p in &dead {
            for (i, order) in before_orders.iter().enumerate() {
                let k = order.iter().position(|&q| q == p).expect("dead peer was placed");
                if let Some(&origin) = order[k + 1..].iter().find(|q| !dead.contains(q)) {
                    let pivot = before.label(p, i) + 1;
                    updates.push((origin, LabelUpdate { substream: i, pivot, flag: -1, stamp: stamp(round, i, p, 0) }));
                }
            }
        }
        if let Some((w, basis)) = &newcomer {
            for (i, &x) in basis.iter().enumerate() {
                let upd = LabelUpdate { substream: i, pivot: x, flag: 1, stamp: stamp(round, i, *w, 1) };
                self.overlay.peers.get_mut(w).expect("new").applied_update_stamps.insert(upd.stamp);
                updates.push((*w, upd));
            }
        }
        let basis_of = |p: NodeId, i: usize| match &newcomer {
            Some((w, basis)) if *w == p => basis[i],
            _ => before.label(p, i),
        };
        let mut per_substream = vec![0usize; m];
        for (_, u) in &updates {
            per_substream[u.substream] += 1;
        }
        if per_substream.iter().any(|&c| c > 1) {
            self.metrics.budget_overflow_rounds += 1;
        }
        for i in 0..m {
            if per_substream[i] == 0 {
                continue;
            }
            let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
            for e in self.overlay.edges(i) {
                if let (Endpoint::Peer(a), Endpoint::Peer(b)) = (e.from, e.to) {
                    adj.entry(a).or_default().push(b);
                    adj.entry(b).or_default().push(a);
                }
            }
            for (origin, upd) in updates.iter().filter(|(_, u)| u.substream == i) {
                let mut queue = VecDeque::from([*origin]);
                let mut first = true;
                while let Some(u) = queue.pop_front() {
                    let pv = self.overlay.peers.get_mut(&u).expect("live");
                    let fresh = apply_label_update(pv, basis_of(u, i), upd);
                    if fresh || std::mem::take(&mut first) {
                        queue.extend(adj.get(&u).map(Vec::as_slice).unwrap_or(&[]));
                    }
                }
            }
        }
        for (i, forest) in shapes.iter().enumerate() {
            let mut pred = None;
            for &p in &flat_order(forest) {
                let sv = self.overlay.view_mut(p, i);
                if let Some(fix) = label_consistency(sv.label, pred) {
                    sv.label = fix;
                    self.metrics.label_corrections += 1;
                }
                pred = Some(sv.label);
            }
        }

        // Forwarding and control labels on the repaired graph.
        let r = self.config.substream_rate();
        for i in 0..m {
            let single = self.overlay.roots[i].len() == 1;
            let mut incoming = control_labels(&self.overlay, i);
            for &p in &flat_order(&shapes[i]) {
                let pv = &self.overlay.peers[&p];
                let inc = incoming[&p];
                let sv = &pv.substreams[i];
                if single && sv.is_leaf() && sv.child_redundant != Some(inc.address) {
                    let detail =
                        format!("leaf redundant edge to {:?} but control address {}", sv.child_redundant, inc.address);
                    return Err(RunError::Fault { round, fault: ProtocolFault { peer: p, substream: i, detail } });
                }
                let ls = sv.child_secondary.map(|s| self.overlay.label(s, i));
                let out = forward(pv, i, round, r, inc, ls).map_err(|fault| RunError::Fault { round, fault })?;
                for o in out {
                    if let (Endpoint::Peer(q), Message::Control { label, .. }) = (o.to, o.msg) {
                        incoming.insert(q, label);
                    }
                }
                self.overlay.view_mut(p, i).last_control_label = Some(inc);
            }
        }
        let transient =
            if lean { BTreeMap::new() } else { peer_rates(&self.overlay, &self.config, &BTreeSet::new(), &promoted) };

        // Balancing.
        let pre_balance = self.overlay.clone();
        self.balance(round)?;
        let balance_deltas = topology_deltas(&pre_balance, &self.overlay);
        if repairs + balance_deltas > 0 {
            refresh_memory(&mut self.overlay, &self.config);
        }
        if balance_deltas > 0 {
            refresh_controls(&mut self.overlay);
        }
        let deltas = repairs + balance_deltas;

        // Checks and bookkeeping.
        let p1_reports = check_property1(&self.overlay);
        let mut p2_violations = check_property2(&self.overlay);
        p2_violations.extend(check_consistency(&self.overlay));
        let p1 = p1_reports.iter().all(|r| r.holds);
        if self.halt_on_violation {
            if let Some(rep) = p1_reports.iter().find(|r| !r.holds) {
                let peer = rep.unreachable.first().copied().unwrap_or(NodeId(0));
                return Err(RunError::Invariant {
                    round,
                    violation: PropertyViolation::Unreachable { substream: rep.substream, peer },
                });
            }
            if let Some(v) = p2_violations.first() {
                return Err(RunError::Invariant { round, violation: v.clone() });
            }
        }
        let full = self.config.rate();
        for (p, rate) in &slot {
            let after = transient.get(p).copied().unwrap_or(*rate);
            if *rate < full || after < full {
                *self.deficit_rounds.entry(*p).or_default() += 1;
            }
        }
        let delay = if lean {
            super::measure::DelayReport { per_peer: BTreeMap::new(), overall: None }
        } else {
            measure_delay(&self.overlay)
        };
        for (p, ds) in &delay.per_peer {
            if let Some(worst) = ds.iter().flatten().max() {
                let e = self.worst_delay.entry(*p).or_default();
                *e = (*e).max(*worst);
            }
        }
        let min_rate = slot.values().min().copied().unwrap_or(full);
        let transient_rate = transient.values().min().copied().unwrap_or(full);
        let track_min = |slot: &mut Option<Rational64>, v: Rational64| *slot = Some(slot.map_or(v, |s| s.min(v)));
        track_min(&mut self.metrics.min_rate, min_rate);
        track_min(&mut self.metrics.min_transient_rate, transient_rate);
        self.metrics.departures += dead.len();
        self.metrics.repairs += repairs;
        self.metrics.reentries += reentries;
        self.metrics.promotions += promoted.len();
        self.metrics.max_memory =
            self.metrics.max_memory.max(self.overlay.peers.values().map(|p| p.memory_len()).max().unwrap_or(0));
        self.metrics.max_delay = match (self.metrics.max_delay, delay.overall, round) {
            (_, None, _) => None,
            (_, Some(d), 1) => Some(d),
            (prev, Some(d), _) => prev.map(|p| p.max(d)),
        };
        if deltas == 0 {
            self.quiet_rounds += 1;
        } else {
            self.quiet_rounds = 0;
            self.last_change_round = round;
        }
        let p3 = !lean
            && p1
            && p2_violations.is_empty()
            && (0..m).all(|i| substream_balance_violations(&self.overlay, &self.config, i).is_empty());
        let steady = p3
            && (0..m).all(|i| {
                canonical_labels(&self.overlay, i).is_ok_and(|c| c.iter().all(|(p, &l)| self.overlay.label(*p, i) == l))
            });
        let record = RoundRecord {
            round,
            event: if tags.is_empty() { "none".into() } else { tags.join("+") },
            repairs,
            reentries,
            p1,
            p2: p2_violations.is_empty(),
            p3,
            steady,
            min_rate,
            transient_rate,
            delay: delay.overall,
        };
        self.records.push(record.clone());
        Ok(record)
    }

    /// Places newcomer `w` in substream `i` and returns the new forest with
    /// `w`'s basis label there.
    fn insert_newcomer(
        &self,
        i: usize,
        w: NodeId,
        contact: Option<NodeId>,
        mv: &ArrivalMove,
        forest: &[Shape],
        controls: &HashMap<NodeId, ControlLabel>,
    ) -> (Vec<Shape>, u32) {
        let g = &self.overlay;
        let locate = |p: NodeId| forest.iter().enumerate().find_map(|(t, s)| s.position(p).map(|k| (t, k)));
        let attempt = |t: usize, k: usize, take: bool, x: u32| {
            forest[t].insert_at(k, w, take).ok().map(|s| {
                let mut out = forest.to_vec();
                out[t] = s;
                (out, x)
            })
        };
        let placed = match mv {
            ArrivalMove::AfterContact => contact
                .and_then(|c| locate(c).map(|(t, k)| (c, t, k)))
                .and_then(|(c, t, k)| attempt(t, k + 1, false, g.label(c, i) + 1)),
            ArrivalMove::TakeSlot { candidates } => candidates.iter().find_map(|&u| {
                let (t, k) = locate(u)?;
                let sv = g.view(u, i);
                let ls = sv.child_secondary.map(|s| g.label(s, i));
                if !insert_reply(sv, controls.get(&u).copied(), ls) {
                    return None;
                }
                attempt(t, k, true, g.label(u, i))
            }),
            ArrivalMove::Server => None,
        };
        placed.unwrap_or_else(|| match forest.last() {
            Some(last) => {
                let x = last.order.last().map_or(1, |&q| g.label(q, i) + 1);
                attempt(forest.len() - 1, last.len(), false, x).expect("appending a leaf is always valid")
            }
            None => (vec![Shape::chain(vec![w])], 1),
        })
    }
}
