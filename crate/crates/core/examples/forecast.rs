//! Training the LSTM power forecaster and comparing it with the simple
//! baselines on a noiseless sinusoid.
//!
//! cargo run --release --example forecast

use blis_sim::energy::HarvesterTrace;
use blis_sim::forecast::{one_step_rmse, train, ForecastModel, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 1.5 mW mean, 1 mW amplitude, 60-sample period.
    let powers: Vec<f64> = (0..600)
        .map(|i| 1.5 + (2.0 * std::f64::consts::PI * i as f64 / 60.0).sin())
        .collect();
    let trace = HarvesterTrace::uniform(0.0, 1.0, &powers)?;

    let cfg = TrainConfig { epochs: 100, seed: 7, ..TrainConfig::default() };
    let lstm = train(&trace, &cfg)?;
    let h = &lstm.history;
    println!("normalized loss: initial {:.4}", h.initial);
    for e in [0, 9, 24, 49, 99] {
        println!("  epoch {:>3}: train {:.5}, validation {:.5}", e + 1, h.train[e], h.validation[e]);
    }

    println!("\none-step RMSE (amplitude 1 mW):");
    for (name, model) in [
        ("lstm", lstm),
        ("persistence", ForecastModel::persistence()),
        ("ewma", ForecastModel::ewma(0.5, 10)?),
    ] {
        println!("  {name:<12} {:.4} mW", one_step_rmse(&model, &trace));
    }
    Ok(())
}
