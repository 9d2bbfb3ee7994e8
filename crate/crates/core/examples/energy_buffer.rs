//! Charging a capacitor: the continuous RC curve, the slotted buffer update,
//! and how the federated split divides harvested power.
//!
//! cargo run --example energy_buffer

use blis_sim::energy::{buffer_step, capacitor_voltage, split_harvest, EnergyBuffer, FederatedStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 1 mW into 47 uF across 10 kOhm, starting empty.
    let cap = EnergyBuffer::new(47e-6, 10e3, 1.0, 0.0)?;
    println!("RC curve, 1 mW into 47 uF / 10 kOhm:");
    for t in [0.0, 0.1, 0.25, 0.5, 1.0, 2.0] {
        println!("  v({t:>4} s) = {:.6} V", capacitor_voltage(1.0, &cap, 0.0, t)?);
    }

    // One slot of the discrete update: 10 uJ, 10% leak, 80% efficiency, 1 mW for 10 ms.
    let b = EnergyBuffer::new(47e-6, 10e3, 0.8, 0.1)?.with_energy(10e-6);
    let next = buffer_step(&b, 1.0, 0.01)?;
    println!("\none slot: {:.3} uJ -> {:.3} uJ", b.energy_j * 1e6, next.energy_j * 1e6);

    // Default device buffers with the 1.8 V brown-out floor.
    let sense = EnergyBuffer::new(47e-6, 10e3, 0.9, 0.01)?.with_cutoff(1.8);
    let radio = EnergyBuffer::new(220e-6, 10e3, 0.9, 0.01)?.with_cutoff(1.8);
    println!(
        "\nfloors: sense {:.1} uJ, radio {:.1} uJ",
        sense.floor_energy_j() * 1e6,
        radio.floor_energy_j() * 1e6
    );
    let mut store = FederatedStore::new(sense, radio, 0.7, 0.3)?;
    for (sense_active, label) in [(true, "sense ready"), (false, "sense idle")] {
        let (s, r) = split_harvest(&store, 2.0, sense_active)?;
        println!("2 mW split while {label}: sense {s:.2} mW, radio {r:.2} mW");
    }

    // Charge both buffers for one second with Sense idle.
    for _ in 0..100 {
        let (s, r) = split_harvest(&store, 2.0, false)?;
        store.sense.step(s, 0.01)?;
        store.radio.step(r, 0.01)?;
    }
    println!(
        "after 1 s at 2 mW: sense {:.3} V ({:.1} uJ usable), radio {:.3} V ({:.1} uJ usable)",
        store.sense.voltage(),
        store.sense.usable_energy_j() * 1e6,
        store.radio.voltage(),
        store.radio.usable_energy_j() * 1e6
    );
    Ok(())
}
