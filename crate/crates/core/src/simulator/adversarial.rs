use super::engine::Simulation;
use super::scenario::{ChurnEvent, ChurnScenario, Contact, EventKind};
use crate::overlay::{Endpoint, GlobalOverlay, NodeId, StreamConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// How a generated scenario picks its events from the live overlay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Mixed random arrivals and departure blocks.
    Random,
    /// Blocks around the root of one substream.
    RootDepartures,
    /// Blocks made of a peer's nearest cycle ancestors in one substream.
    AncestorBlocks,
    /// Runs of arrivals alternating with runs of departures.
    ArrivalBursts,
    /// Degree-two peers leaving while induction exchanges are in flight.
    MidPipeline,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::RootDepartures,
        Strategy::AncestorBlocks,
        Strategy::ArrivalBursts,
        Strategy::MidPipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::RootDepartures => "root",
            Strategy::AncestorBlocks => "ancestors",
            Strategy::ArrivalBursts => "bursts",
            Strategy::MidPipeline => "pipeline",
        }
    }
}

fn union_adjacency(g: &GlobalOverlay) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for i in 0..g.m {
        for e in g.edges(i) {
            if let (Endpoint::Peer(a), Endpoint::Peer(b)) = (e.from, e.to) {
                adj.entry(a).or_default().insert(b);
                adj.entry(b).or_default().insert(a);
            }
        }
    }
    adj
}

/// Up to `size` peers reached first by a search from `start`; always connected.
fn grow_block(g: &GlobalOverlay, start: NodeId, size: usize) -> Vec<NodeId> {
    let adj = union_adjacency(g);
    let mut block = vec![start];
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in adj.get(&u).into_iter().flatten() {
            if block.len() >= size {
                return block;
            }
            if seen.insert(v) {
                block.push(v);
                queue.push_back(v);
            }
        }
    }
    block
}

/// The `k` cycle predecessors of `v` in substream `i`, nearest first, stopping at the server.
pub fn cycle_ancestors(g: &GlobalOverlay, i: usize, v: NodeId, k: usize) -> Vec<NodeId> {
    let Ok(shapes) = g.shapes(i) else { return Vec::new() };
    let order: Vec<NodeId> = shapes.iter().flat_map(|s| s.order.iter().copied()).collect();
    let Some(pos) = order.iter().position(|&p| p == v) else { return Vec::new() };
    order[..pos].iter().rev().take(k).copied().collect()
}

struct Picker {
    rng: ChaCha8Rng,
    strategy: Strategy,
    low: usize,
    high: usize,
}

impl Picker {
    fn arrival(&mut self, g: &GlobalOverlay) -> EventKind {
        let peers: Vec<NodeId> = g.peers.keys().copied().collect();
        if peers.is_empty() || self.rng.gen_bool(0.5) {
            EventKind::Arrive(Contact::Random)
        } else {
            EventKind::Arrive(Contact::Peer(*peers.choose(&mut self.rng).expect("nonempty")))
        }
    }

    fn random_block(&mut self, g: &GlobalOverlay, k: usize) -> Vec<NodeId> {
        let peers: Vec<NodeId> = g.peers.keys().copied().collect();
        let start = *peers.choose(&mut self.rng).expect("nonempty");
        let size = self.rng.gen_range(1..=k);
        grow_block(g, start, size)
    }

    fn departure(&mut self, g: &GlobalOverlay, k: usize, round: u64) -> Vec<NodeId> {
        let k = k.min(g.n().saturating_sub(self.low)).max(1);
        match self.strategy {
            Strategy::RootDepartures => {
                let i = round as usize % g.m;
                let root = g.roots[i][0];
                let size = self.rng.gen_range(1..=k);
                grow_block(g, root, size)
            }
            Strategy::AncestorBlocks => {
                let i = self.rng.gen_range(0..g.m);
                let peers: Vec<NodeId> = g.peers.keys().copied().collect();
                let v = *peers.choose(&mut self.rng).expect("nonempty");
                let block = cycle_ancestors(g, i, v, k);
                if block.is_empty() {
                    vec![v]
                } else {
                    block
                }
            }
            Strategy::MidPipeline => {
                let degree_two: Vec<NodeId> =
                    g.peers.values().filter(|p| !p.degree_two_substreams().is_empty()).map(|p| p.id).collect();
                match degree_two.choose(&mut self.rng) {
                    Some(&d) => {
                        let size = self.rng.gen_range(1..=k);
                        grow_block(g, d, size)
                    }
                    None => self.random_block(g, k),
                }
            }
            Strategy::Random | Strategy::ArrivalBursts => self.random_block(g, k),
        }
    }

    fn pick(&mut self, g: &GlobalOverlay, cfg: &StreamConfig, round: u64) -> Vec<EventKind> {
        let n = g.n();
        if n <= self.low {
            return vec![self.arrival(g)];
        }
        let depart = |p: &mut Picker| EventKind::Depart(p.departure(g, cfg.k_block, round));
        if n >= self.high {
            return vec![depart(self)];
        }
        match self.strategy {
            Strategy::Random => {
                let x: f64 = self.rng.gen();
                if x < 0.4 {
                    vec![depart(self)]
                } else if x < 0.8 {
                    vec![self.arrival(g)]
                } else if x < 0.9 {
                    vec![depart(self), self.arrival(g)]
                } else {
                    Vec::new()
                }
            }
            Strategy::RootDepartures | Strategy::AncestorBlocks => {
                if self.rng.gen_bool(0.6) {
                    vec![depart(self)]
                } else {
                    vec![self.arrival(g)]
                }
            }
            Strategy::ArrivalBursts => {
                let period = 2 * cfg.k_block as u64 + 2;
                if round % period <= cfg.k_block as u64 {
                    vec![self.arrival(g)]
                } else {
                    vec![depart(self)]
                }
            }
            Strategy::MidPipeline => match round % 3 {
                0 => vec![depart(self)],
                1 => vec![self.arrival(g)],
                _ => Vec::new(),
            },
        }
    }
}

/// Generates a scenario by driving a live simulation from the canonical steady
/// state and choosing each round's events from the overlay it has reached.
pub fn generate(cfg: &StreamConfig, seed: u64, rounds: u64, strategy: Strategy) -> ChurnScenario {
    let mut scenario = ChurnScenario::quiet(cfg.clone(), seed, rounds);
    if rounds == 0 || cfg.validate().is_err() {
        return scenario;
    }
    let Ok(mut sim) = Simulation::from_scenario(&scenario) else { return scenario };
    sim.halt_on_violation = false;
    sim.lean = true;
    let n = cfg.n_initial;
    let mut picker = Picker {
        rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
        strategy,
        low: (n / 2).max(cfg.m + 2).max(cfg.k_block + 1),
        high: (2 * n).max(cfg.m + 2 * cfg.k_block + 4),
    };
    for round in 1..=rounds {
        let events: Vec<ChurnEvent> =
            picker.pick(&sim.overlay, cfg, round).into_iter().map(|kind| ChurnEvent { round, kind }).collect();
        scenario.events.extend(events.iter().cloned());
        if sim.step(&events).is_err() {
            break;
        }
    }
    scenario
}

/// Mixed random churn.
pub fn random_scenario(cfg: &StreamConfig, seed: u64, rounds: u64) -> ChurnScenario {
    generate(cfg, seed, rounds, Strategy::Random)
}

/// One scenario per strategy in [`Strategy::ALL`], each from its own derived seed.
pub fn adversarial_suite(cfg: &StreamConfig, seed: u64, rounds: u64) -> Vec<ChurnScenario> {
    Strategy::ALL
        .iter()
        .enumerate()
        .map(|(k, &s)| generate(cfg, seed.wrapping_mul(31).wrapping_add(k as u64), rounds, s))
        .collect()
}
