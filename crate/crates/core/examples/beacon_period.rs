//! Beacon-interval sizing and the synchronization-vector exchange for one
//! application, driven by hand without the simulator.
//!
//! cargo run --example beacon_period

use blis_sim::device::{DeviceState, TaskCostTable};
use blis_sim::protocol::{Reading, SensorDataMsg, SensorDataPacket};
use blis_sim::time::SimTime;
use blis_sim::vsda::{
    compute_beacon_period, min_beacon_period_s, set_sync_vector, AggregatorConfig, AggregatorState, AppSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let costs = TaskCostTable::default();
    println!("shortest beacon slot: {:.3} ms", min_beacon_period_s(&costs) * 1e3);

    // Application 3: five modules at 20 (NML) or 10 (LP) readings per hour.
    let spec = AppSpec::new(3, 5, 20, 10, 3600.0)?;
    for (alpha, states) in [
        (1.0, vec![DeviceState::Normal; 5]),
        (0.8, vec![DeviceState::Normal; 5]),
        (0.8, vec![DeviceState::Normal, DeviceState::Normal, DeviceState::Normal, DeviceState::LowPower, DeviceState::LowPower]),
    ] {
        let tau = compute_beacon_period(alpha, 3600.0, &spec, &states)?;
        println!("alpha {alpha:.1}, {} readings/period -> tau {tau:.2} s", spec.total_rate(&states));
    }

    let v = vec![0u16, 0].into();
    println!("\nnext solicitation from [0,0] with targets [3,1]: {}", set_sync_vector(&v, &[3, 1]));

    // Two modules, rates (3, 1), module 1 expected to be LP.
    let spec = AppSpec::new(1, 2, 3, 1, 40.0)?;
    let mut agg = AggregatorState::new(spec, AggregatorConfig::default(), &costs)?;
    agg.set_estimates(&[DeviceState::Normal, DeviceState::LowPower]);
    let mut now = agg.first_beacon();
    for _ in 0..4 {
        let (beacon, _) = agg.emit_beacon(now);
        let Some(b) = beacon else { break };
        print!("t={:>5.1} s  beacon {} V={} V^={}", now.as_secs_f64(), b.seq, b.app_synch.sync_current, b.app_synch.sync_new);
        if let Some(j) = b.app_synch.solicited_module() {
            let msg = SensorDataMsg::new(1, j as u8, vec![Reading::from_value(0, 21.0, 0)])?;
            let reply = SensorDataPacket::new(b.seq, agg.d_hat[j], 3_000, msg)?;
            agg.on_sensor_data(&reply, now + SimTime::from_millis_f64(123.071))?;
            println!("  -> module {j} replied, V={}", agg.v);
        } else {
            println!();
        }
        now += agg.tau;
    }
    Ok(())
}
