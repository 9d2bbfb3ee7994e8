//! Runs one bundled scenario file and prints its headline metrics.
//!
//! cargo run --release --example run_scenario -- configs/scenario2.toml

use blis_sim::sim::{run_config, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/scenario2.toml").to_string());
    let mut cfg = ScenarioConfig::load(&path)?;
    // Keep the example quick: an hour of simulated time.
    cfg.duration_s = cfg.duration_s.min(3600.0);
    let out = run_config(&cfg)?;
    let m = &out.metrics;
    println!("{} ({} log records)", cfg.name, out.log.len());
    println!("  solicitations {}, received {}, lost {}, open {}", m.solicitations, m.received, m.lost, m.open);
    println!("  data loss        {:.4}", m.data_loss);
    println!("  mean delay       {:.3} s", m.mean_packet_delay_s);
    println!("  availability     {:.4}", m.availability);
    println!("  initial time     {:.3} s", m.available_initial_time_s);
    println!("  overhead ratio   {:.2e}", m.overhead_ratio);
    for a in &m.achieved_rate {
        println!(
            "  app {}: {:.1} readings per period (all-NML target {}), final alpha {:.2}",
            a.app_id, a.achieved_per_period, a.target_nml_per_period, a.final_alpha
        );
    }
    Ok(())
}
