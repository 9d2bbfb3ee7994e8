//! The discrete-event loop tying devices, channels and aggregators together.

use crate::device::{BufferRole, DeviceEvent, DeviceRuntime, DeviceState, ManagerOutcome, TaskKind};
use crate::energy::EnergyBuffer;
use crate::forecast::{estimate_state, forecast_interval, ForecastModel, StateParams};
use crate::energy::HarvesterTrace;
use crate::metrics::{compute_metrics, MetricsBundle};
use crate::protocol::{
    decode_beacon, decode_sensor_packet, encode_beacon, encode_sensor_packet, SensorDataMsg, SensorDataPacket,
};
use crate::time::SimTime;
use crate::vsda::{AggEvent, AggregatorMode, AggregatorState};

use super::log::EventLog;
use super::queue::{EventKind, EventQueue};
use super::scenario::Scenario;

const COMPONENTS: [(BufferRole, &str); 2] = [(BufferRole::Sense, "mcu"), (BufferRole::Radio, "radio")];

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: EventLog,
    pub metrics: MetricsBundle,
}

struct Device {
    rt: DeviceRuntime,
    trace: HarvesterTrace,
    model: ForecastModel,
    entity: String,
    available: [bool; 2],
    /// State predicted at the previous beacon for this one.
    estimate: Option<DeviceState>,
    blackouts: Vec<(SimTime, SimTime)>,
}

impl Device {
    fn blacked_out(&self, t: SimTime) -> bool {
        self.blackouts.iter().any(|&(s, e)| t >= s && t < e)
    }
}

struct App {
    agg: AggregatorState,
    devices: Vec<Device>,
    entity: String,
}

struct Engine {
    queue: EventQueue,
    log: EventLog,
    apps: Vec<App>,
    slot: SimTime,
    slot_s: f64,
    duration: SimTime,
    delay: SimTime,
}

fn fmt_vec(v: &[u16]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(","))
}

/// Runs a built scenario to completion. Pure in (scenario, seed).
pub fn run(scenario: &Scenario) -> RunOutput {
    let mut engine = Engine::new(scenario);
    engine.run();
    let metrics = compute_metrics(&engine.log).expect("engine writes well-formed logs");
    RunOutput {
        log: engine.log,
        metrics,
    }
}

impl Engine {
    fn new(sc: &Scenario) -> Self {
        let mut log = EventLog::default();
        log.push(
            SimTime::ZERO,
            "sim",
            "start",
            format!(
                "name={};seed={};duration_us={};slot_us={};apps={}",
                sc.name,
                sc.seed,
                sc.duration.micros(),
                sc.slot().micros(),
                sc.apps.len()
            ),
        );
        let mut apps = Vec::new();
        for (ai, setup) in sc.apps.iter().enumerate() {
            let costs = setup
                .devices
                .first()
                .map(|d| d.config.costs.clone())
                .unwrap_or_default();
            let agg = AggregatorState::new(setup.spec.clone(), sc.aggregator.clone(), &costs)
                .expect("scenario specs are validated");
            let mut devices = Vec::new();
            for (j, d) in setup.devices.iter().enumerate() {
                let mut rt = DeviceRuntime::new(
                    setup.spec.app_id,
                    j as u8,
                    setup.spec.clone(),
                    d.config.clone(),
                    d.trace.max_power(),
                )
                .expect("device configs are validated");
                rt.forced_state = d.forced_state;
                devices.push(Device {
                    rt,
                    trace: d.trace.clone(),
                    model: d.model.clone(),
                    entity: format!("dev:{}.{}", setup.spec.app_id, j),
                    available: [false; 2],
                    estimate: None,
                    blackouts: sc
                        .blackouts
                        .iter()
                        .filter(|b| b.app == ai && b.module == j)
                        .map(|b| (b.start, b.end))
                        .collect(),
                });
            }
            apps.push(App {
                agg,
                devices,
                entity: format!("agg:{}", setup.spec.app_id),
            });
        }
        Self {
            queue: EventQueue::new(),
            log,
            apps,
            slot: sc.slot().max(SimTime(1)),
            slot_s: sc.slot_s,
            duration: sc.duration,
            delay: sc.propagation_delay,
        }
    }

    fn run(&mut self) {
        self.init();
        while let Some(t) = self.queue.peek_time() {
            if t > self.duration {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            let now = ev.time;
            match ev.kind {
                EventKind::EnergySlot => self.on_energy_slot(now),
                EventKind::BeaconDue { app } => self.on_beacon_due(app, now),
                EventKind::BeaconArrival { app, bytes } => self.on_beacon_arrival(app, &bytes, now),
                EventKind::PacketArrival { app, bytes } => self.on_packet_arrival(app, &bytes, now),
                EventKind::TaskComplete { app, module, kind } => self.on_task_complete(app, module, kind, now),
                EventKind::PeriodRollover { app } => self.on_rollover(app, now),
                EventKind::TraceEnd => {
                    self.log.push(now, "sim", "trace_end", "");
                    self.duration = now;
                    break;
                }
            }
        }
        self.finish();
    }

    fn init(&mut self) {
        let mut trace_end = None::<SimTime>;
        for ai in 0..self.apps.len() {
            let app = &mut self.apps[ai];
            let spec = &app.agg.spec;
            self.log.push(
                SimTime::ZERO,
                app.entity.clone(),
                "config",
                format!(
                    "modules={};rate_nml={};rate_lp={};period_us={};mode={};reattempt_limit={}",
                    spec.modules,
                    spec.rate_nml,
                    spec.rate_lp,
                    app.agg.period().micros(),
                    app.agg.config.mode,
                    app.agg.config.reattempt_limit
                ),
            );
            for d in &mut app.devices {
                let end = SimTime::from_secs_f64(d.trace.end_time());
                trace_end = Some(trace_end.map_or(end, |t| t.min(end)));
                self.log.push(
                    SimTime::ZERO,
                    d.entity.clone(),
                    "config",
                    format!(
                        "strategy={};threshold_uj={};sense_cost_uj={};receive_cost_uj={}",
                        d.rt.config.strategy,
                        d.rt.threshold_j() * 1e6,
                        d.rt.config.costs.sense.energy_uj,
                        d.rt.config.costs.receive.energy_uj
                    ),
                );
                for (c, (role, name)) in COMPONENTS.iter().enumerate() {
                    let on = d.rt.component_available(*role);
                    d.available[c] = on;
                    self.log.push(SimTime::ZERO, d.entity.clone(), "avail", format!("component={name};on={}", on as u8));
                }
            }
            let now = SimTime::ZERO;
            if app.agg.config.mode == AggregatorMode::Vsda {
                Self::estimate(app, now, self.slot_s, &mut self.log, false);
            }
            let ev = app.agg.restart_period();
            Self::log_agg(&mut self.log, &app.entity, now, &[ev]);
            let first = app.agg.first_beacon();
            let end = app.agg.period_end();
            self.queue.schedule(first, EventKind::BeaconDue { app: ai });
            self.queue.schedule(end, EventKind::PeriodRollover { app: ai });
        }
        if let Some(end) = trace_end {
            if end < self.duration {
                self.queue.schedule(end, EventKind::TraceEnd);
            }
        }
        if !self.apps.is_empty() {
            self.queue.schedule(self.slot, EventKind::EnergySlot);
        }
    }

    fn finish(&mut self) {
        let end = self.duration;
        for app in &self.apps {
            if let Some(s) = &app.agg.outstanding {
                self.log.push(end, app.entity.clone(), "solicit_open", format!("seq={};module={}", s.seq, s.module));
            }
            for d in &app.devices {
                let l = &d.rt.ledger;
                let stored = d.rt.storage.stored_energy_j();
                self.log.push(
                    end,
                    d.entity.clone(),
                    "audit",
                    format!(
                        "initial_j={:e};harvested_j={:e};leaked_j={:e};overflow_j={:e};task_j={:e};overhead_j={:e};stored_j={:e};manager_calls={}",
                        l.initial_j, l.harvested_j, l.leaked_j, l.overflow_j, l.task_j, l.overhead_j, stored, l.manager_calls
                    ),
                );
            }
        }
        self.log.push(end, "sim", "end", format!("duration_us={}", end.micros()));
    }

    fn log_agg(log: &mut EventLog, entity: &str, now: SimTime, events: &[AggEvent]) {
        for e in events {
            let (name, detail) = match e {
                AggEvent::Solicit { seq, module } => ("solicit", format!("seq={seq};module={module}")),
                AggEvent::Reattempt { seq, module, attempt } => {
                    ("reattempt", format!("seq={seq};module={module};attempt={attempt}"))
                }
                AggEvent::SolicitLost { seq, module } => ("solicit_lost", format!("seq={seq};module={module}")),
                AggEvent::KeepAlive { seq } => ("keepalive", format!("seq={seq}")),
                AggEvent::SensorRx {
                    seq,
                    module,
                    delay,
                    gen_delay,
                    v,
                } => (
                    "sensor_rx",
                    format!(
                        "seq={seq};module={module};delay_us={};gen_delay_us={};v={}",
                        delay.micros(),
                        gen_delay.micros(),
                        fmt_vec(v.as_slice())
                    ),
                ),
                AggEvent::Stale { seq, module } => ("stale", format!("seq={seq};module={module}")),
                AggEvent::Rollover { period } => ("rollover", format!("period={period}")),
                AggEvent::Tau { tau, alpha, infeasible } => (
                    "tau",
                    format!("tau_us={};alpha={alpha};infeasible={}", tau.micros(), *infeasible as u8),
                ),
            };
            log.push(now, entity.to_string(), name, detail);
        }
    }

    /// Scores last beacon's predictions and forecasts states for the next interval.
    fn estimate(app: &mut App, now: SimTime, slot_s: f64, log: &mut EventLog, score: bool) {
        let tau_s = app.agg.tau.as_secs_f64();
        let mut states = Vec::with_capacity(app.devices.len());
        for (j, d) in app.devices.iter_mut().enumerate() {
            if score {
                if let Some(pred) = d.estimate {
                    let actual = d.rt.instant_state();
                    app.agg.record_estimate(pred, actual);
                    log.push(now, app.entity.clone(), "estimate", format!("module={j};predicted={pred};actual={actual}"));
                }
            }
            let predicted = match d.rt.forced_state {
                Some(s) => s,
                None => {
                    let p = forecast_interval(&d.model, &d.trace, now.as_secs_f64(), tau_s);
                    let cfg = &d.rt.config;
                    let buffer = EnergyBuffer::new(
                        cfg.sense_capacitance_f + cfg.radio_capacitance_f,
                        cfg.parallel_resistance_ohm,
                        cfg.efficiency,
                        cfg.leakage_fraction,
                    )
                    .expect("validated")
                    .with_cutoff(cfg.cutoff_voltage)
                    .with_saturation(d.trace.max_power());
                    let energy = buffer.floor_energy_j() + app.agg.last_energy_j[j];
                    let params = StateParams {
                        buffer: buffer.with_energy(energy),
                        threshold_j: d.rt.threshold_j(),
                        interval_s: tau_s,
                        slot_s,
                    };
                    estimate_state(p, &params)
                }
            };
            d.estimate = Some(predicted);
            states.push(predicted);
        }
        app.agg.set_estimates(&states);
    }

    fn drain_device_events(log: &mut EventLog, d: &mut Device) {
        for (t, e) in d.rt.drain_events() {
            match e {
                DeviceEvent::Task { kind, from, to } => {
                    log.push(t, d.entity.clone(), "task", format!("kind={kind};from={from};to={to}"))
                }
                DeviceEvent::State { from, to } => log.push(t, d.entity.clone(), "state", format!("from={from};to={to}")),
            }
        }
    }

    /// Runs the managers on one device and books whatever they dispatched.
    fn wake(&mut self, ai: usize, j: usize, now: SimTime, beacon_window: bool) {
        let d = &mut self.apps[ai].devices[j];
        if d.rt.running().is_some() {
            return;
        }
        let outcome = d.rt.run_managers(now, beacon_window);
        Self::drain_device_events(&mut self.log, d);
        match outcome {
            Ok(ManagerOutcome {
                started: Some((kind, done)),
                ..
            }) => {
                self.log.push(
                    now,
                    d.entity.clone(),
                    "exec",
                    format!(
                        "kind={kind};cost_uj={};until_us={}",
                        d.rt.config.costs.get(kind).energy_uj,
                        done.micros()
                    ),
                );
                self.queue.schedule(done, EventKind::TaskComplete { app: ai, module: j, kind });
            }
            Ok(_) => {}
            Err(e) => self.log.push(now, d.entity.clone(), "error", e.to_string().replace(',', " ")),
        }
        self.refresh_availability(ai, j, now);
    }

    fn refresh_availability(&mut self, ai: usize, j: usize, now: SimTime) {
        let d = &mut self.apps[ai].devices[j];
        for (c, (role, name)) in COMPONENTS.iter().enumerate() {
            let on = d.rt.component_available(*role);
            if on != d.available[c] {
                d.available[c] = on;
                self.log.push(now, d.entity.clone(), "avail", format!("component={name};on={}", on as u8));
            }
        }
    }

    fn on_energy_slot(&mut self, now: SimTime) {
        let from = now.saturating_sub(self.slot).as_secs_f64();
        for ai in 0..self.apps.len() {
            for j in 0..self.apps[ai].devices.len() {
                let d = &mut self.apps[ai].devices[j];
                let p = d.trace.power_at(from).unwrap_or(0.0);
                if let Err(e) = d.rt.apply_energy_strategy(p, self.slot_s) {
                    self.log.push(now, d.entity.clone(), "error", e.to_string().replace(',', " "));
                }
                for role in [BufferRole::Sense, BufferRole::Radio] {
                    let e = d.rt.buffer(role).energy_j;
                    if e < 0.0 {
                        self.log.push(now, d.entity.clone(), "energy_negative", format!("energy_j={e:e}"));
                    }
                }
                if d.rt.running().is_none() && d.rt.wants_wake() {
                    self.wake(ai, j, now, false);
                } else {
                    self.refresh_availability(ai, j, now);
                }
            }
        }
        let next = now + self.slot;
        if next <= self.duration {
            self.queue.schedule(next, EventKind::EnergySlot);
        }
    }

    fn on_beacon_due(&mut self, ai: usize, now: SimTime) {
        let slot_s = self.slot_s;
        {
            let app = &mut self.apps[ai];
            if app.agg.config.mode == AggregatorMode::Vsda {
                Self::estimate(app, now, slot_s, &mut self.log, true);
                if let Some(ev) = app.agg.maybe_recompute_tau() {
                    Self::log_agg(&mut self.log, &app.entity, now, &[ev]);
                }
            }
        }
        let (beacon, events) = self.apps[ai].agg.emit_beacon(now);
        Self::log_agg(&mut self.log, &self.apps[ai].entity.clone(), now, &events);
        if let Some(b) = beacon {
            let bytes = encode_beacon(&b).expect("aggregator beacons fit a PDU");
            self.log.push(
                now,
                self.apps[ai].entity.clone(),
                "beacon_tx",
                format!(
                    "seq={};v={};v_hat={};bytes={}",
                    b.seq,
                    fmt_vec(b.app_synch.sync_current.as_slice()),
                    fmt_vec(b.app_synch.sync_new.as_slice()),
                    bytes.len()
                ),
            );
            // Devices wake at the scheduled beacon instant to listen.
            for j in 0..self.apps[ai].devices.len() {
                if !self.apps[ai].devices[j].blacked_out(now) {
                    self.wake(ai, j, now, true);
                }
            }
            self.queue.schedule(now + self.delay, EventKind::BeaconArrival { app: ai, bytes });
        }
        let agg = &self.apps[ai].agg;
        let next = now + agg.tau;
        if next < agg.period_end() {
            self.queue.schedule(next, EventKind::BeaconDue { app: ai });
        }
    }

    fn on_beacon_arrival(&mut self, ai: usize, bytes: &[u8], now: SimTime) {
        let beacon = decode_beacon(bytes).expect("beacons round-trip");
        for d in &mut self.apps[ai].devices {
            let heard = !d.blacked_out(now) && d.rt.accept_beacon(&beacon);
            let event = if heard { "beacon_rx" } else { "beacon_lost" };
            self.log.push(now, d.entity.clone(), event, format!("seq={}", beacon.seq));
        }
    }

    fn on_packet_arrival(&mut self, ai: usize, bytes: &[u8], now: SimTime) {
        let app = &mut self.apps[ai];
        let pkt = match decode_sensor_packet(bytes) {
            Ok(p) => p,
            Err(e) => {
                self.log.push(now, app.entity.clone(), "error", e.to_string().replace(',', " "));
                return;
            }
        };
        let ev = match app.agg.on_sensor_data(&pkt, now) {
            Ok(ev) => ev,
            Err(_) => AggEvent::Stale {
                seq: pkt.in_reply_to,
                module: pkt.module_id,
            },
        };
        let entity = app.entity.clone();
        Self::log_agg(&mut self.log, &entity, now, &[ev]);
    }

    fn on_task_complete(&mut self, ai: usize, j: usize, kind: TaskKind, now: SimTime) {
        let app_id = self.apps[ai].agg.spec.app_id;
        let d = &mut self.apps[ai].devices[j];
        let done = match d.rt.complete_task(kind, now) {
            Ok(c) => c,
            Err(e) => {
                self.log.push(now, d.entity.clone(), "error", e.to_string().replace(',', " "));
                return;
            }
        };
        Self::drain_device_events(&mut self.log, d);
        if let Some(seq) = done.heard {
            self.log.push(now, d.entity.clone(), "heard", format!("seq={seq}"));
        }
        if let Some(a) = done.actuated {
            self.log.push(now, d.entity.clone(), "actuate", format!("state={}", a.state as u8));
        }
        if let Some(out) = done.sent {
            let pkt = SensorDataMsg::new(app_id, j as u8, vec![out.reading])
                .and_then(|m| SensorDataPacket::new(out.in_reply_to, out.device_state, out.energy_uj, m))
                .and_then(|p| encode_sensor_packet(&p));
            match pkt {
                Ok(bytes) => {
                    self.log.push(
                        now,
                        d.entity.clone(),
                        "sensor_tx",
                        format!("seq={};state={};energy_uj={}", out.in_reply_to, out.device_state, out.energy_uj),
                    );
                    self.queue.schedule(now + self.delay, EventKind::PacketArrival { app: ai, bytes });
                }
                Err(e) => self.log.push(now, d.entity.clone(), "error", e.to_string().replace(',', " ")),
            }
        }
        self.wake(ai, j, now, false);
        self.apps[ai].devices[j].rt.settle();
    }

    fn on_rollover(&mut self, ai: usize, now: SimTime) {
        let app = &mut self.apps[ai];
        let events = app.agg.rollover(now);
        let entity = app.entity.clone();
        Self::log_agg(&mut self.log, &entity, now, &events);
        let first = app.agg.first_beacon();
        let end = app.agg.period_end();
        self.queue.schedule(first, EventKind::BeaconDue { app: ai });
        self.queue.schedule(end, EventKind::PeriodRollover { app: ai });
    }
}
