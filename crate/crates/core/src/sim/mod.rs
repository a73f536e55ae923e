//! The supermarket chain scenario.

pub mod bench;
pub mod config;
pub mod laws;
pub mod run;
pub mod scenarios;
pub mod trace;
pub mod verify;
pub mod world;

pub use config::{BranchConfig, Injection, Misbehavior, MisbehaviorScript, Product, ScenarioConfig};
pub use run::{run_scenario, Simulation};
pub use trace::{Trace, TraceHeader};
pub use verify::{verify_trace, Verdict};
pub use world::AcmeWorld;
