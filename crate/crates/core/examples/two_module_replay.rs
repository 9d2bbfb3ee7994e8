//! Replays the two-module timing example: module 0 (NML, 3 readings) and
//! module 1 (LP, 1 reading), with module 1 missing the second beacon.
//!
//! cargo run --example two_module_replay

use blis_sim::sim::{run_config, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/two_module_replay.toml");
    let out = run_config(&ScenarioConfig::load(path)?)?;
    for r in out.log.iter() {
        if matches!(r.event.as_str(), "beacon_tx" | "beacon_lost" | "sensor_rx" | "rollover") {
            println!("{:>6.2} s  {:<8} {:<12} {}", r.time.as_secs_f64(), r.entity, r.event, r.detail);
        }
    }
    let mut per_module = [0u32; 2];
    for r in out.log.events("sensor_rx") {
        if let Some(j) = r.field("module").and_then(|m| m.parse::<usize>().ok()) {
            per_module[j] += 1;
        }
    }
    println!("\nreadings per module this period: {per_module:?}");
    Ok(())
}
