//! Deterministic discrete-event simulation of apps, devices and aggregators.

pub mod engine;
pub mod log;
pub mod queue;
pub mod scenario;

pub use engine::{run, RunOutput};
pub use log::{EventLog, LogError, LogRecord};
pub use queue::{Event, EventKind, EventQueue};
pub use scenario::{
    build_scenario, AppConfig, BlackoutConfig, ConfigError, Designation, ForecasterConfig, Overrides, Scenario,
    ScenarioConfig, SyntheticTrace, TraceConfig,
};

use crate::protocol::Packet;

/// Delivery rule: the aggregator always hears sensor packets; a device hears
/// a beacon only while its Receive task is running.
pub fn deliver(packet: &Packet, receiver_receive_running: bool) -> bool {
    match packet {
        Packet::SensorData(_) => true,
        Packet::Beacon(_) => receiver_receive_running,
    }
}

/// Builds and runs a scenario from its config.
pub fn run_config(config: &ScenarioConfig) -> Result<RunOutput, ConfigError> {
    Ok(run(&build_scenario(config)?))
}
