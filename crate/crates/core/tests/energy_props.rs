use proptest::prelude::*;

use blis_sim::energy::{capacitor_voltage, split_harvest, EnergyBuffer, FederatedStore};

proptest! {
    #[test]
    fn buffer_energy_stays_in_bounds(
        c in 10e-6f64..1e-3,
        eta in 0.1f64..=1.0,
        sigma in 0.0f64..0.2,
        powers in proptest::collection::vec(0.0f64..10.0, 1..400),
    ) {
        let mut b = EnergyBuffer::new(c, 10e3, eta, sigma).unwrap().with_saturation(10.0);
        for p in powers {
            b.step(p, 0.01).unwrap();
            prop_assert!(b.energy_j >= 0.0);
            prop_assert!(b.energy_j <= b.max_energy_j() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn lossless_buffer_integrates_exactly(powers in proptest::collection::vec(0.0f64..10.0, 1..2000)) {
        let mut b = EnergyBuffer::new(1.0, 1e12, 1.0, 0.0).unwrap();
        for &p in &powers {
            b.step(p, 0.01).unwrap();
        }
        let want: f64 = powers.iter().map(|p| p * 1e-5).sum();
        prop_assert!((b.energy_j - want).abs() <= 1e-9 * want.max(1e-12));
    }

    #[test]
    fn draw_never_goes_negative(e in 0.0f64..1e-3, amount in 0.0f64..2e-3) {
        let mut b = EnergyBuffer::new(100e-6, 10e3, 1.0, 0.0).unwrap().with_energy(e);
        let before = b.energy_j;
        match b.draw(amount) {
            Ok(()) => prop_assert!((b.energy_j - (before - amount).max(0.0)).abs() < 1e-15),
            Err(_) => prop_assert_eq!(b.energy_j, before),
        }
        prop_assert!(b.energy_j >= 0.0);
    }

    #[test]
    fn voltage_approaches_steady_state(p in 0.01f64..10.0, v0 in 0.0f64..5.0, t1 in 0.0f64..5.0, dt in 0.001f64..5.0) {
        let b = EnergyBuffer::new(100e-6, 10e3, 1.0, 0.0).unwrap();
        let target = (p * 1e-3 * 10e3).sqrt();
        let g1 = (capacitor_voltage(p, &b, v0, t1).unwrap() - target).abs();
        let g2 = (capacitor_voltage(p, &b, v0, t1 + dt).unwrap() - target).abs();
        prop_assert!(g2 <= g1 + 1e-12);
    }

    #[test]
    fn split_conserves_power(p in 0.0f64..20.0, active in any::<bool>(), high in 0.5f64..1.0) {
        let s = EnergyBuffer::new(47e-6, 10e3, 0.9, 0.01).unwrap();
        let r = EnergyBuffer::new(220e-6, 10e3, 0.9, 0.01).unwrap();
        let store = FederatedStore::new(s, r, high, 1.0 - high).unwrap();
        let (a, b) = split_harvest(&store, p, active).unwrap();
        prop_assert!(a >= 0.0 && b >= 0.0);
        prop_assert!((a + b - p).abs() <= 1e-12 * p.max(1.0));
        let ordered = if active { a >= b - 1e-12 } else { a <= b + 1e-12 };
        prop_assert!(ordered);
    }
}
