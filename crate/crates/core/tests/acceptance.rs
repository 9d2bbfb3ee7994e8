//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails. Expected values come from independent
//! oracles computed here, never from the code under test.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use blis_sim::device::{DeviceConfig, DeviceState, EnergyStrategy, TaskCostTable};
use blis_sim::energy::{buffer_step, capacitor_voltage, EnergyBuffer, HarvesterTrace};
use blis_sim::forecast::{one_step_rmse, train, ForecastKind, TrainConfig};
use blis_sim::metrics::MetricsBundle;
use blis_sim::protocol::{
    decode_any, decode_beacon, decode_sensor_packet, encode_beacon, encode_sensor_packet, ActuatorControlMsg,
    AppSynchMsg, Beacon, Packet, RateControlMsg, Reading, SensorDataMsg, SensorDataPacket, SyncVector,
};
use blis_sim::sim::{
    run_config, AppConfig, BlackoutConfig, Designation, ForecasterConfig, ScenarioConfig, SyntheticTrace, TraceConfig,
};
use blis_sim::vsda::{compute_beacon_period, min_beacon_period_s, AggregatorMode, AppSpec, VsdaError};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    check(
        elapsed.as_secs_f64() < limit_s,
        format!("{what} took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------------------
// 1. Capacitor charging curve and slotted buffer update.

fn energy_model() -> Outcome {
    let start = Instant::now();
    let b = EnergyBuffer::new(100e-6, 10e3, 1.0, 0.0).map_err(|e| e.to_string())?;
    // Oracle: v = sqrt(P·r_p·(1 − e^(−2t/(c·r_p)))) with P·r_p = 10 V², 2t/(c·r_p) = 2.
    let oracle = (10.0 * (1.0 - (-2.0f64).exp())).sqrt();
    let v = capacitor_voltage(1.0, &b, 0.0, 1.0).map_err(|e| e.to_string())?;
    check(((v - oracle) / oracle).abs() < 1e-6, format!("v(1 s) = {v}, oracle {oracle}"))?;
    // The quoted four-digit value 2.9406 agrees to within one unit in its last place.
    check((v - 2.9406).abs() < 1e-4, format!("v(1 s) = {v} vs quoted 2.9406"))?;

    // Further hand-computed points: v0 above steady state decays toward sqrt(P·r_p).
    for (p_mw, c, v0, t) in [(2.0, 47e-6, 0.0, 0.25), (0.5, 220e-6, 3.0, 2.0), (1.5, 267e-6, 1.2, 0.7)] {
        let buf = EnergyBuffer::new(c, 10e3, 1.0, 0.0).map_err(|e| e.to_string())?;
        let pr = p_mw * 1e-3 * 10e3;
        let want = (pr - (-2.0 * t / (c * 10e3)).exp() * (pr - v0 * v0)).sqrt();
        let got = capacitor_voltage(p_mw, &buf, v0, t).map_err(|e| e.to_string())?;
        check(((got - want) / want).abs() < 1e-6, format!("v({p_mw} mW, {c} F, {v0} V, {t} s) = {got}, want {want}"))?;
    }

    // 10 µJ, σ = 0.1, η = 0.8, 1 mW for 10 ms: 9 µJ kept + 8 µJ harvested.
    let b = EnergyBuffer::new(47e-6, 10e3, 0.8, 0.1).map_err(|e| e.to_string())?.with_energy(10e-6);
    let next = buffer_step(&b, 1.0, 0.01).map_err(|e| e.to_string())?;
    check((next.energy_j - 17e-6).abs() <= 1e-18, format!("slot update gave {} J, want 17e-6", next.energy_j))?;

    // Lossless integration over 1e5 slots of a varying trace.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let powers: Vec<f64> = (0..100_000).map(|_| rng.gen_range(0.0..5.0)).collect();
    let mut buf = EnergyBuffer::new(1.0, 1e12, 1.0, 0.0).map_err(|e| e.to_string())?;
    for &p in &powers {
        buf.step(p, 0.01).map_err(|e| e.to_string())?;
    }
    let want: f64 = powers.iter().map(|p| p * 1e-3 * 0.01).sum();
    let rel = ((buf.energy_j - want) / want).abs();
    check(rel < 1e-9, format!("integration relative error {rel:e}"))?;
    within(start.elapsed(), 1.0, "energy suite")?;
    Ok(format!("v(1 s) = {v:.7} V, slot update 17 uJ, 1e5-slot integration rel err {rel:.1e}"))
}

// ---------------------------------------------------------------------------
// 2. With a perfect forecaster and ample power every target is met exactly.

fn oracle_rates() -> Outcome {
    let cfg = ScenarioConfig {
        name: "oracle".into(),
        duration_s: 7200.0,
        designation: Designation::None,
        apps: vec![AppConfig::new(1, 2, 10, 5, 3600.0)],
        forecaster: ForecasterConfig { kind: ForecastKind::Oracle, ..ForecasterConfig::default() },
        trace: TraceConfig::Constant { power_mw: 5.0, sample_interval_s: 1.0 },
        ..ScenarioConfig::default()
    };
    let start = Instant::now();
    let out = run_config(&cfg).map_err(|e| e.to_string())?;
    let wall = start.elapsed();
    let m = &out.metrics;
    let rate = &m.achieved_rate[0];
    // Two NML modules at 10 readings each per period.
    check(rate.per_period == vec![20, 20], format!("readings per period {:?}, want [20, 20]", rate.per_period))?;
    check(m.data_loss == 0.0 && m.lost == 0, format!("data loss {} ({} lost)", m.data_loss, m.lost))?;
    check(rate.final_alpha == 1.0, format!("alpha {}", rate.final_alpha))?;
    within(wall, 1.0, "two-period oracle run")?;
    Ok(format!("per-period readings {:?}, data loss 0, {:.2} s wall", rate.per_period, wall.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// 3. Two-module timing replay: NML module at 3 readings, LP module at 1, the
//    LP module dark during the second beacon.

fn two_module_replay() -> Outcome {
    let mut cfg = ScenarioConfig {
        name: "replay".into(),
        duration_s: 40.0,
        designation: Designation::None,
        apps: vec![AppConfig::new(1, 2, 3, 1, 40.0)],
        forecaster: ForecasterConfig { kind: ForecastKind::Oracle, ..ForecasterConfig::default() },
        trace: TraceConfig::Constant { power_mw: 5.0, sample_interval_s: 1.0 },
        ..ScenarioConfig::default()
    };
    cfg.overrides.clamp_state.insert("1.0".into(), DeviceState::Normal);
    cfg.overrides.clamp_state.insert("1.1".into(), DeviceState::LowPower);
    cfg.overrides.radio_blackouts.push(BlackoutConfig { device: "1.1".into(), start_s: 12.0, end_s: 18.0 });
    let start = Instant::now();
    let out = run_config(&cfg).map_err(|e| e.to_string())?;

    let beacons: Vec<(String, String)> = out
        .log
        .events("beacon_tx")
        .map(|r| (r.field("v").unwrap_or("").to_string(), r.field("v_hat").unwrap_or("").to_string()))
        .collect();
    let want: Vec<(String, String)> = [("[0,0]", "[1,0]"), ("[1,0]", "[2,0]"), ("[2,0]", "[3,0]"), ("[3,0]", "[3,1]")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    check(beacons == want, format!("beacon trajectory {beacons:?}"))?;

    let lost: Vec<(String, String)> = out
        .log
        .events("beacon_lost")
        .map(|r| (r.entity.clone(), r.field("seq").unwrap_or("").to_string()))
        .collect();
    check(lost == vec![("dev:1.1".to_string(), "1".to_string())], format!("missed beacons {lost:?}"))?;

    let mut per_module = [0u32; 2];
    for r in out.log.events("sensor_rx") {
        let j: usize = r.field("module").and_then(|m| m.parse().ok()).ok_or("sensor_rx without module")?;
        per_module[j] += 1;
    }
    check(per_module == [3, 1], format!("period total {per_module:?}"))?;
    check(out.log.events("rollover").count() == 1, "expected exactly one rollover")?;
    within(start.elapsed(), 1.0, "replay")?;
    Ok("[0,0]->[1,0]->[2,0]->[3,0]->[3,1], module 1 misses seq 1, period total (3,1)".into())
}

// ---------------------------------------------------------------------------
// 4. The beacon interval never over-commits the period.

fn beacon_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let floor = min_beacon_period_s(&TaskCostTable::default());
    let (mut violations, mut feasible, mut floored) = (0, 0, 0);
    for _ in 0..1000 {
        let modules = rng.gen_range(1..=12usize);
        let rate_nml = rng.gen_range(1..=200u16);
        let rate_lp = rng.gen_range(1..=rate_nml);
        let period = rng.gen_range(1.0..10_000.0);
        let alpha = 1.0 - rng.gen_range(0.0..1.0); // (0, 1]
        let sensors: Vec<u8> = (0..modules).map(|_| rng.gen_range(1..=3)).collect();
        let mut spec = AppSpec::new(rng.gen_range(1..=40), modules, rate_nml, rate_lp, period).map_err(|e| e.to_string())?;
        spec.sensors_per_module = sensors.clone();
        let states: Vec<DeviceState> = (0..modules)
            .map(|_| if rng.gen_bool(0.5) { DeviceState::Normal } else { DeviceState::LowPower })
            .collect();
        // Oracle: Σ_j Σ_k R over modules and their sensors.
        let total: f64 = states
            .iter()
            .zip(&sensors)
            .map(|(s, &k)| k as f64 * if *s == DeviceState::Normal { rate_nml } else { rate_lp } as f64)
            .sum();
        match compute_beacon_period(alpha, period, &spec, &states) {
            Ok(tau) => {
                feasible += 1;
                if tau * total > alpha * period * (1.0 + 1e-12) || tau < floor {
                    violations += 1;
                }
            }
            Err(VsdaError::InfeasibleRate { .. }) => {
                floored += 1;
                if alpha * period / total >= floor {
                    violations += 1;
                }
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    check(violations == 0, format!("{violations} violations"))?;
    Ok(format!("0 violations in 1000 tuples ({feasible} feasible, {floored} below the slot floor)"))
}

// ---------------------------------------------------------------------------
// 5 and 9. Randomized runs: state machine, energy safety and manager overhead.

fn random_config(rng: &mut ChaCha8Rng, i: u64) -> ScenarioConfig {
    let strategies = [EnergyStrategy::Atem, EnergyStrategy::Fh, EnergyStrategy::Central];
    let apps = (1..=rng.gen_range(1..=2u8))
        .map(|a| {
            let nml = rng.gen_range(2..=20);
            AppConfig::new(a, rng.gen_range(1..=4), nml, rng.gen_range(1..=nml), rng.gen_range(120.0..600.0))
        })
        .collect();
    let trace = if rng.gen_bool(0.2) {
        TraceConfig::Constant { power_mw: rng.gen_range(0.0..4.0), sample_interval_s: 1.0 }
    } else {
        TraceConfig::Synthetic(SyntheticTrace {
            mean_mw: rng.gen_range(0.2..3.0),
            cycle_period_s: rng.gen_range(60.0..900.0),
            cycle_depth: rng.gen_range(0.0..0.9),
            clear_mean_s: rng.gen_range(5.0..200.0),
            cloud_mean_s: rng.gen_range(5.0..100.0),
            cloud_attenuation: rng.gen_range(0.0..0.5),
            noise: rng.gen_range(0.0..0.3),
            ..SyntheticTrace::default()
        })
    };
    ScenarioConfig {
        name: format!("random-{i}"),
        seed: rng.gen(),
        duration_s: rng.gen_range(300.0..900.0),
        lp_fraction: [0.0, 0.5, 1.0][rng.gen_range(0..3)],
        apps,
        trace,
        device: DeviceConfig { strategy: strategies[rng.gen_range(0..3)], ..DeviceConfig::default() },
        ..ScenarioConfig::default()
    }
    .with_mode(if rng.gen_bool(0.5) { AggregatorMode::Vsda } else { AggregatorMode::Polling })
}

fn random_runs() -> Vec<(String, MetricsBundle)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..100)
        .map(|i| {
            let cfg = random_config(&mut rng, i);
            let m = run_config(&cfg).expect("random config is valid").metrics;
            (format!("{} ({}+{})", cfg.name, cfg.device.strategy, cfg.aggregator.mode), m)
        })
        .collect()
}

fn safety(runs: &[(String, MetricsBundle)]) -> Outcome {
    let mut worst_audit = 0.0f64;
    for (name, m) in runs {
        check(m.illegal_transitions == 0, format!("{name}: {} illegal transitions", m.illegal_transitions))?;
        check(m.dependency_violations == 0, format!("{name}: {} dependency violations", m.dependency_violations))?;
        check(m.negative_energy_events == 0, format!("{name}: {} negative-energy events", m.negative_energy_events))?;
        check(m.errors == 0, format!("{name}: {} runtime errors", m.errors))?;
        check(m.audit_max_rel_error <= 1e-6, format!("{name}: audit error {:e}", m.audit_max_rel_error))?;
        worst_audit = worst_audit.max(m.audit_max_rel_error);
    }
    let tasks: u64 = runs.iter().map(|(_, m)| m.received + m.lost).sum();
    Ok(format!("100 runs clean, worst audit error {worst_audit:.1e} ({tasks} solicitations resolved)"))
}

fn overhead(runs: &[(String, MetricsBundle)]) -> Outcome {
    let mut worst = 0.0f64;
    for (name, m) in runs {
        if m.task_energy_j > 0.0 {
            check(m.overhead_ratio < 1e-3, format!("{name}: overhead ratio {:e}", m.overhead_ratio))?;
            worst = worst.max(m.overhead_ratio);
        }
    }
    Ok(format!("worst manager/task energy ratio {worst:.2e} (< 1e-3)"))
}

// ---------------------------------------------------------------------------
// 6. Forecaster sanity.

fn forecaster() -> Outcome {
    let start = Instant::now();
    let amplitude = 1.0;
    let powers: Vec<f64> = (0..600)
        .map(|i| 1.5 + amplitude * (2.0 * std::f64::consts::PI * i as f64 / 60.0).sin())
        .collect();
    let sine = HarvesterTrace::uniform(0.0, 1.0, &powers).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { epochs: 100, seed: 11, ..TrainConfig::default() };
    let model = train(&sine, &cfg).map_err(|e| e.to_string())?;
    let loss100 = model.history.train[99];
    check(loss100 < 0.2, format!("normalized loss at epoch 100 is {loss100}"))?;
    let rmse = one_step_rmse(&model, &sine);
    check(rmse < 0.05 * amplitude, format!("sinusoid RMSE {rmse} mW"))?;

    let again = train(&sine, &cfg).map_err(|e| e.to_string())?;
    check(again == model, "retraining with the same seed gave a different model")?;

    let mut worst_const = 0.0f64;
    for p in [0.0, 0.8, 2.5] {
        let flat = HarvesterTrace::constant(p, 1.0, 300.0).map_err(|e| e.to_string())?;
        let m = train(&flat, &TrainConfig { epochs: 50, seed: 3, ..TrainConfig::default() }).map_err(|e| e.to_string())?;
        let r = one_step_rmse(&m, &flat);
        check(r < 0.01, format!("constant {p} mW trace RMSE {r}"))?;
        worst_const = worst_const.max(r);
    }
    within(start.elapsed(), 60.0, "forecaster suite")?;
    Ok(format!(
        "epoch-100 loss {loss100:.2e}, sinusoid RMSE {rmse:.4} mW, constant RMSE <= {worst_const:.1e} mW, deterministic"
    ))
}

// ---------------------------------------------------------------------------
// 7. Comparative directionality on paired seeds with intermittent power.

fn comparison_config(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "half-lp".into(),
        seed,
        duration_s: 3600.0,
        lp_fraction: 0.5,
        apps: vec![
            AppConfig::new(1, 2, 10, 5, 3600.0),
            AppConfig::new(2, 4, 16, 8, 3600.0),
            AppConfig::new(3, 5, 20, 10, 3600.0),
        ],
        trace: TraceConfig::Synthetic(SyntheticTrace::default()),
        ..ScenarioConfig::default()
    }
}

fn directionality() -> Outcome {
    let n = 50;
    let (mut avail, mut initial, mut a_both) = (0, 0, 0);
    let (mut loss, mut delay, mut b_both) = (0, 0, 0);
    let mut init_gap = Vec::new();
    for seed in 0..n {
        let run = |e, m| run_config(&comparison_config(seed).with_strategy(e).with_mode(m)).map(|o| o.metrics);
        let atem = run(EnergyStrategy::Atem, AggregatorMode::Vsda).map_err(|e| e.to_string())?;
        let fh = run(EnergyStrategy::Fh, AggregatorMode::Vsda).map_err(|e| e.to_string())?;
        let central = run(EnergyStrategy::Central, AggregatorMode::Vsda).map_err(|e| e.to_string())?;
        let polling = run(EnergyStrategy::Atem, AggregatorMode::Polling).map_err(|e| e.to_string())?;
        let a1 = atem.availability >= fh.availability;
        let a2 = atem.available_initial_time_s <= central.available_initial_time_s;
        let b1 = atem.data_loss <= polling.data_loss;
        let b2 = atem.mean_packet_delay_s <= polling.mean_packet_delay_s;
        avail += a1 as u32;
        initial += a2 as u32;
        a_both += (a1 && a2) as u32;
        loss += b1 as u32;
        delay += b2 as u32;
        b_both += (b1 && b2) as u32;
        init_gap.push(central.available_initial_time_s - atem.available_initial_time_s);
    }
    let need = (0.9 * n as f64).ceil() as u32;
    init_gap.sort_by(|a, b| a.total_cmp(b));
    let detail = format!(
        "(a) {a_both}/{n} [availability vs FH {avail}/{n}, initial time vs Central {initial}/{n}, \
         median sooner-by {:+.3} s]; (b) {b_both}/{n} [loss {loss}/{n}, delay {delay}/{n}]; need {need}",
        init_gap[init_gap.len() / 2]
    );
    if a_both >= need && b_both >= need {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 8. Decoders never panic; generated packets round-trip byte-identically.

fn random_beacon(rng: &mut ChaCha8Rng) -> Beacon {
    let m = rng.gen_range(1..=20usize);
    let n = rng.gen_range(0..=20usize);
    let current: Vec<u16> = (0..m).map(|_| rng.gen_range(0..u16::MAX)).collect();
    let mut new = current.clone();
    if rng.gen_bool(0.8) {
        new[rng.gen_range(0..m)] += 1;
    }
    let rates: Vec<u16> = (0..n).map(|_| rng.gen()).collect();
    let rates_new: Vec<u16> = (0..n).map(|_| rng.gen()).collect();
    Beacon {
        app_id: rng.gen_range(1..=40),
        seq: rng.gen(),
        rate_control: RateControlMsg::new(rates, rates_new).expect("equal lengths"),
        app_synch: AppSynchMsg::new(SyncVector(current), SyncVector(new)).expect("one increment"),
        actuator_control: rng
            .gen_bool(0.3)
            .then(|| ActuatorControlMsg { state: rng.gen(), target_module: rng.gen_range(0..m as u8) }),
    }
}

fn random_sensor_packet(rng: &mut ChaCha8Rng) -> SensorDataPacket {
    let app = rng.gen_range(1..=40);
    let module = rng.gen();
    let readings = (0..rng.gen_range(1..=26))
        .map(|_| Reading { sensor_id: rng.gen(), value: rng.gen(), sample_time_ms: rng.gen() })
        .collect();
    let state = if rng.gen_bool(0.5) { DeviceState::Normal } else { DeviceState::LowPower };
    let msg = SensorDataMsg::new(app, module, readings).expect("1..=26 readings");
    SensorDataPacket::new(rng.gen(), state, rng.gen(), msg).expect("valid packet")
}

fn protocol_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let prev_hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut panics = 0u32;
    let mut ok = 0u32;
    let mut seeds: Vec<Vec<u8>> = Vec::new();
    for _ in 0..64 {
        seeds.push(encode_beacon(&random_beacon(&mut rng)).expect("encodes"));
        seeds.push(encode_sensor_packet(&random_sensor_packet(&mut rng)).expect("encodes"));
    }
    for i in 0..100_000 {
        // Half pure noise, half mutated valid packets to reach deeper fields.
        let bytes: Vec<u8> = if i % 2 == 0 {
            (0..rng.gen_range(0..300)).map(|_| rng.gen()).collect()
        } else {
            let mut b = seeds[rng.gen_range(0..seeds.len())].clone();
            for _ in 0..rng.gen_range(1..4) {
                match rng.gen_range(0..3) {
                    0 if !b.is_empty() => {
                        let k = rng.gen_range(0..b.len());
                        b[k] = rng.gen();
                    }
                    1 if !b.is_empty() => b.truncate(rng.gen_range(0..b.len())),
                    _ => b.push(rng.gen()),
                }
            }
            b
        };
        let r = panic::catch_unwind(AssertUnwindSafe(|| {
            let a = decode_beacon(&bytes).is_ok();
            let b = decode_sensor_packet(&bytes).is_ok();
            let c = decode_any(&bytes).is_ok();
            (a, b, c)
        }));
        match r {
            Ok((a, b, c)) => ok += (a || b || c) as u32,
            Err(_) => panics += 1,
        }
    }
    panic::set_hook(prev_hook);
    check(panics == 0, format!("{panics} decoder panics"))?;

    let mut mismatches = 0;
    for i in 0..10_000 {
        let bytes = if i % 2 == 0 {
            encode_beacon(&random_beacon(&mut rng))
        } else {
            encode_sensor_packet(&random_sensor_packet(&mut rng))
        }
        .map_err(|e| e.to_string())?;
        let again = match decode_any(&bytes).map_err(|e| e.to_string())? {
            Packet::Beacon(b) => encode_beacon(&b),
            Packet::SensorData(p) => encode_sensor_packet(&p),
        }
        .map_err(|e| e.to_string())?;
        mismatches += (again != bytes) as u32;
    }
    check(mismatches == 0, format!("{mismatches} round-trip mismatches"))?;
    Ok(format!("1e5 inputs x 3 decoders: 0 panics ({ok} decoded); 1e4 round-trips identical"))
}

// ---------------------------------------------------------------------------

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; none apply.
    let mut failed = 0;
    let mut report = |id: &str, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let res = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("criterion {id} {name}: PASS ({secs:.2} s) {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id} {name}: FAIL ({secs:.2} s) {d}");
            }
        }
    };
    report("1", "energy model", &mut energy_model);
    report("2", "oracle rate satisfaction", &mut oracle_rates);
    report("3", "two-module replay", &mut two_module_replay);
    report("4", "beacon interval bound", &mut beacon_bound);
    let mut runs = Vec::new();
    report("5", "state machine and energy safety", &mut || {
        runs = random_runs();
        safety(&runs)
    });
    report("6", "forecaster sanity", &mut forecaster);
    report("7", "comparative directionality", &mut directionality);
    report("8", "protocol fuzz", &mut protocol_fuzz);
    report("9", "manager overhead", &mut || overhead(&runs));
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
