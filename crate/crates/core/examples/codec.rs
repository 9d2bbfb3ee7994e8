//! Encoding and decoding beacons and sensor-data packets.
//!
//! cargo run --example codec

use blis_sim::device::DeviceState;
use blis_sim::protocol::{
    decode_any, describe_packet, encode_beacon, encode_sensor_packet, ActuatorControlMsg, AppSynchMsg, Beacon,
    Packet, RateControlMsg, Reading, SensorDataMsg, SensorDataPacket,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let beacon = Beacon {
        app_id: 1,
        seq: 0,
        rate_control: RateControlMsg::new(vec![3, 1], vec![3, 1])?,
        app_synch: AppSynchMsg::new(vec![0, 0].into(), vec![1, 0].into())?,
        actuator_control: Some(ActuatorControlMsg { state: true, target_module: 1 }),
    };
    let bytes = encode_beacon(&beacon)?;
    println!("beacon hex: {}", hex::encode(&bytes));
    print!("{}", describe_packet(&bytes)?);

    let msg = SensorDataMsg::new(1, 0, vec![Reading::from_value(0, 21.375, 5_123)])?;
    let pkt = SensorDataPacket::new(0, DeviceState::Normal, 3_693, msg)?;
    let bytes = encode_sensor_packet(&pkt)?;
    println!("\nsensor hex: {}", hex::encode(&bytes));
    print!("{}", describe_packet(&bytes)?);

    match decode_any(&bytes)? {
        Packet::SensorData(p) => assert_eq!(p, pkt),
        Packet::Beacon(_) => unreachable!("sensor magic decodes as sensor data"),
    }

    // Corrupt input is rejected with a typed error.
    let mut bad = bytes.clone();
    bad.truncate(bad.len() - 3);
    println!("\ntruncated packet: {}", decode_any(&bad).unwrap_err());
    Ok(())
}
