//! Paired-seed comparison of the energy strategies and aggregators, written
//! as CSV plus SVG bar charts.
//!
//! cargo run --release --example compare -- [out_dir]

use blis_sim::metrics::report::{compare, emit_outputs, OutputFormat, Variant};
use blis_sim::sim::{AppConfig, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = std::env::args().nth(1).unwrap_or_else(|| "compare-out".into());
    let cfg = ScenarioConfig {
        name: "half-lp".into(),
        duration_s: 1800.0,
        lp_fraction: 0.5,
        apps: vec![
            AppConfig::new(1, 2, 10, 5, 1800.0),
            AppConfig::new(2, 4, 16, 8, 1800.0),
        ],
        ..ScenarioConfig::default()
    };
    let report = compare(&[cfg], &Variant::defaults(), &[0, 1, 2, 3])?;
    for s in report.summaries.iter().filter(|s| s.variant != s.baseline) {
        println!("{} vs {:<15} {:<24} mean {:+9.3}", s.variant, s.baseline.to_string(), s.metric, s.mean);
    }
    let r = &report.reference;
    println!(
        "\nreference gains: availability {}%, initial time {} s, data loss {}%, delay {}%",
        r.availability_gain_pct, r.initial_time_sooner_s, r.data_loss_reduction_pct, r.delay_reduction_pct
    );
    for p in emit_outputs(&report, OutputFormat::Csv, out_dir.as_ref(), true)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
