//! Simulator for battery-less IoT devices with a task-aware federated energy
//! manager (ATEM) and a vector-synchronization data aggregator (VSDA).

pub mod device;
pub mod energy;
pub mod forecast;
pub mod protocol;
pub mod time;
pub mod vsda;
pub mod metrics;
pub mod sim;
pub mod cli;
