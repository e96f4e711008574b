//! TTL cache engine: hit models, the event-driven cache itself, workload
//! generation, metrics, and the simulation driver.

mod engine;
mod metrics;
mod model;
mod sim;
mod workload;

pub use engine::{Outcome, TtlCache};
pub use metrics::Metrics;
pub use model::CacheKind;
pub use sim::{run_simulation, Policy, SimConfig, SimOutput, TrajectoryPoint};
pub use workload::RequestStream;
