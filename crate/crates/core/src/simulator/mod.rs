//! Slotted-round engine. Each round runs churn, repair, label updates,
//! forwarding and balancing in that order, then checks Properties 1 and 2.

mod adversarial;
mod balance;
mod engine;
mod measure;
mod scenario;
mod trace;

pub use adversarial::{adversarial_suite, cycle_ancestors, generate, random_scenario, Strategy};
pub use balance::{assemble_requests, Pipeline};
pub use engine::{
    bootstrap_by_arrivals, bootstrap_steady, refresh_overlay, run, ArrivalBootstrap, RunError, RunOutput, Simulation,
};
pub use measure::{measure_delay, peer_rates, DelayReport};
pub use scenario::{format_rational, parse_rational, ChurnEvent, ChurnScenario, Contact, EventKind, ScenarioError};
pub use trace::{parse_trace, write_trace, RoundRecord, RunMetrics, TraceError};
