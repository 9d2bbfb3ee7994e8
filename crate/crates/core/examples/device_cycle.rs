//! One beacon cycle on a single device: charge, wake for the beacon, then
//! Receive -> Sense -> Transmit, printing every task-state change.
//!
//! cargo run --example device_cycle

use blis_sim::device::{DeviceConfig, DeviceEvent, DeviceRuntime, EnergyStrategy, TaskKind};
use blis_sim::protocol::{AppSynchMsg, Beacon, RateControlMsg};
use blis_sim::time::SimTime;
use blis_sim::vsda::AppSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = AppSpec::new(1, 2, 10, 5, 3600.0)?;
    let config = DeviceConfig { strategy: EnergyStrategy::Atem, ..DeviceConfig::default() };
    let mut dev = DeviceRuntime::new(1, 0, spec, config, 3.0)?;

    // Three seconds of 2 mW in 10 ms slots.
    let slot = 0.01;
    for _ in 0..300 {
        dev.apply_energy_strategy(2.0, slot)?;
    }
    println!(
        "t=3 s: usable {:.1} uJ (threshold {:.1} uJ) -> state {}",
        dev.usable_energy_j() * 1e6,
        dev.threshold_j() * 1e6,
        dev.instant_state()
    );

    let beacon = Beacon {
        app_id: 1,
        seq: 0,
        rate_control: RateControlMsg::new(vec![10, 10], vec![10, 10])?,
        app_synch: AppSynchMsg::new(vec![0, 0].into(), vec![1, 0].into())?,
        actuator_control: None,
    };

    let mut now = SimTime::from_secs_f64(3.0);
    let mut next = dev.run_managers(now, true)?.started;
    assert!(dev.accept_beacon(&beacon), "Receive is running at the beacon instant");
    while let Some((kind, done)) = next {
        println!("{:>9} us  run {kind} until {} us", now.micros(), done.micros());
        now = done;
        let out = dev.complete_task(kind, now)?;
        if let Some(seq) = out.heard {
            println!("{:>9} us  heard beacon {seq}", now.micros());
        }
        if let Some(sent) = out.sent {
            println!(
                "{:>9} us  sent reading {:.3} for beacon {} (state {}, {} uJ)",
                now.micros(),
                sent.reading.value(),
                sent.in_reply_to,
                sent.device_state,
                sent.energy_uj
            );
        }
        next = dev.run_managers(now, false)?.started;
        dev.settle();
    }

    println!("\ntask-state changes:");
    for (t, e) in dev.drain_events() {
        if let DeviceEvent::Task { kind, from, to } = e {
            if kind != TaskKind::Log {
                println!("  {:>9} us  {kind:<8} {from} -> {to}", t.micros());
            }
        }
    }
    println!(
        "\nledger: tasks {:.3} uJ, managers {:.3} nJ over {} calls",
        dev.ledger.task_j * 1e6,
        dev.ledger.overhead_j * 1e9,
        dev.ledger.manager_calls
    );
    Ok(())
}
