//! Metrics are a pure function of the event log: write a log to text, parse
//! it back and recompute them.
//!
//! cargo run --example metrics_from_log

use blis_sim::metrics::compute_metrics_from_text;
use blis_sim::sim::{run_config, AppConfig, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig {
        duration_s: 600.0,
        lp_fraction: 0.5,
        apps: vec![AppConfig::new(1, 2, 10, 5, 600.0)],
        ..ScenarioConfig::default()
    };
    let out = run_config(&cfg)?;
    let text = out.log.to_text();
    println!("first log lines:");
    for line in text.lines().take(8) {
        println!("  {line}");
    }
    let again = compute_metrics_from_text(&text)?;
    assert_eq!(again, out.metrics);
    println!("\nrecomputed from {} lines of text:", text.lines().count());
    println!("{}", serde_json::to_string_pretty(&again)?.lines().take(20).collect::<Vec<_>>().join("\n"));
    Ok(())
}
