use proptest::prelude::*;

use blis_sim::device::{DeviceState, EnergyStrategy};
use blis_sim::forecast::ForecastKind;
use blis_sim::metrics::compute_metrics_from_text;
use blis_sim::protocol::{AppSynchMsg, Beacon, Packet, RateControlMsg, Reading, SensorDataMsg, SensorDataPacket};
use blis_sim::sim::{
    build_scenario, deliver, run_config, AppConfig, BlackoutConfig, Designation, EventLog, ForecasterConfig,
    ScenarioConfig, SyntheticTrace, TraceConfig,
};
use blis_sim::vsda::AggregatorMode;

fn small(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "small".into(),
        seed,
        duration_s: 900.0,
        lp_fraction: 0.5,
        apps: vec![AppConfig::new(1, 2, 10, 5, 300.0), AppConfig::new(2, 3, 16, 8, 300.0)],
        ..ScenarioConfig::default()
    }
}

#[test]
fn runs_are_deterministic() {
    let a = run_config(&small(3)).unwrap();
    let b = run_config(&small(3)).unwrap();
    assert_eq!(a.log.to_text(), b.log.to_text());
    assert_eq!(a.metrics, b.metrics);
    let c = run_config(&small(4)).unwrap();
    assert_ne!(a.log.to_text(), c.log.to_text());
}

#[test]
fn metrics_recompute_from_log_text() {
    let out = run_config(&small(1)).unwrap();
    let text = out.log.to_text();
    assert_eq!(compute_metrics_from_text(&text).unwrap(), out.metrics);
    let reparsed = EventLog::parse(&text).unwrap();
    assert_eq!(reparsed.to_text(), text);
}

#[test]
fn paired_variants_share_traces() {
    let base = small(9);
    let a = build_scenario(&base.clone().with_strategy(EnergyStrategy::Atem)).unwrap();
    let c = build_scenario(&base.clone().with_strategy(EnergyStrategy::Central).with_mode(AggregatorMode::Polling)).unwrap();
    for (x, y) in a.apps.iter().zip(&c.apps) {
        for (dx, dy) in x.devices.iter().zip(&y.devices) {
            assert_eq!(dx.trace, dy.trace);
            assert_eq!(dx.designated, dy.designated);
        }
    }
}

#[test]
fn radio_blackout_loses_beacons() {
    let mut cfg = ScenarioConfig {
        duration_s: 120.0,
        designation: Designation::None,
        apps: vec![AppConfig::new(1, 1, 4, 2, 120.0)],
        forecaster: ForecasterConfig { kind: ForecastKind::Oracle, ..ForecasterConfig::default() },
        trace: TraceConfig::Constant { power_mw: 5.0, sample_interval_s: 1.0 },
        ..ScenarioConfig::default()
    };
    let clean = run_config(&cfg).unwrap();
    assert_eq!(clean.log.events("beacon_lost").count(), 0);
    cfg.overrides.radio_blackouts.push(BlackoutConfig { device: "1.0".into(), start_s: 0.0, end_s: 120.0 });
    let dark = run_config(&cfg).unwrap();
    assert_eq!(dark.log.events("beacon_rx").count(), 0);
    assert!(dark.log.events("beacon_lost").count() > 0);
    assert_eq!(dark.metrics.received, 0);
}

#[test]
fn beacons_need_a_running_receiver() {
    let b = Beacon {
        app_id: 1,
        seq: 0,
        rate_control: RateControlMsg::new(vec![1], vec![1]).unwrap(),
        app_synch: AppSynchMsg::new(vec![0].into(), vec![1].into()).unwrap(),
        actuator_control: None,
    };
    assert!(deliver(&Packet::Beacon(b.clone()), true));
    assert!(!deliver(&Packet::Beacon(b), false));
    let msg = SensorDataMsg::new(1, 0, vec![Reading::from_value(0, 1.0, 0)]).unwrap();
    let p = SensorDataPacket::new(0, DeviceState::Normal, 0, msg).unwrap();
    assert!(deliver(&Packet::SensorData(p), false));
}

#[test]
fn bundled_configs_match_the_tables() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let expected = [("scenario1.toml", 1.0), ("scenario2.toml", 0.5), ("scenario3.toml", 0.0)];
    for (file, lp) in expected {
        let cfg = ScenarioConfig::load(format!("{dir}/{file}")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.lp_fraction, lp, "{file}");
        let shape: Vec<(u8, usize, u16, u16, f64)> =
            cfg.apps.iter().map(|a| (a.app_id, a.modules, a.rate_nml, a.rate_lp, a.period_s)).collect();
        assert_eq!(
            shape,
            vec![(1, 2, 10, 5, 3600.0), (2, 4, 16, 8, 3600.0), (3, 5, 20, 10, 3600.0)],
            "{file}"
        );
    }
    ScenarioConfig::load(format!("{dir}/two_module_replay.toml")).unwrap().validate().unwrap();
}

#[test]
fn infeasible_rates_run_at_the_floor() {
    // 200 readings in a 10 s period cannot fit 123 ms cycles.
    let cfg = ScenarioConfig {
        duration_s: 30.0,
        designation: Designation::None,
        apps: vec![AppConfig::new(1, 2, 100, 50, 10.0)],
        trace: TraceConfig::Constant { power_mw: 20.0, sample_interval_s: 1.0 },
        ..ScenarioConfig::default()
    };
    let out = run_config(&cfg).unwrap();
    assert!(out.metrics.achieved_rate[0].infeasible_periods > 0);
    assert_eq!(out.metrics.errors, 0);
}

fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
    (
        any::<u64>(),
        0.1f64..3.0,
        1usize..=3,
        prop_oneof![Just(0.0), Just(0.5), Just(1.0)],
        0usize..3,
        any::<bool>(),
        120.0f64..400.0,
    )
        .prop_map(|(seed, mean, modules, lp, strat, vsda, dur)| {
            let strategy = [EnergyStrategy::Atem, EnergyStrategy::Fh, EnergyStrategy::Central][strat];
            ScenarioConfig {
                seed,
                duration_s: dur,
                lp_fraction: lp,
                apps: vec![AppConfig::new(1, modules, 8, 4, 120.0)],
                trace: TraceConfig::Synthetic(SyntheticTrace { mean_mw: mean, ..SyntheticTrace::default() }),
                ..ScenarioConfig::default()
            }
            .with_strategy(strategy)
            .with_mode(if vsda { AggregatorMode::Vsda } else { AggregatorMode::Polling })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_runs_keep_invariants(cfg in arb_config()) {
        let out = run_config(&cfg).unwrap();
        let m = &out.metrics;
        let mut last = 0;
        for r in out.log.iter() {
            prop_assert!(r.time.micros() >= last);
            last = r.time.micros();
        }
        for f in [m.data_loss, m.availability] {
            prop_assert!((0.0..=1.0).contains(&f));
        }
        prop_assert!(m.available_initial_time_s <= cfg.duration_s);
        prop_assert_eq!(m.illegal_transitions, 0);
        prop_assert_eq!(m.dependency_violations, 0);
        prop_assert_eq!(m.negative_energy_events, 0);
        prop_assert_eq!(m.errors, 0);
        prop_assert!(m.audit_max_rel_error <= 1e-6);
        prop_assert_eq!(m.solicitations, m.received + m.lost + m.open);
    }
}
