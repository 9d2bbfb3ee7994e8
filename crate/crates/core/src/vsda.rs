//! The always-on data aggregator: beacon period selection, vector
//! synchronization, reattempts, and a state-agnostic polling baseline.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceState, TaskCostTable};
use crate::protocol::{
    channel_for_app, ActuatorControlMsg, AppSynchMsg, Beacon, ChannelId, ProtocolError, RateControlMsg,
    SensorDataPacket, SyncVector,
};
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum VsdaError {
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("invalid application spec: {0}")]
    InvalidSpec(String),
    #[error("demanded rate needs a beacon every {bound_s} s but the minimum slot is {floor_s} s")]
    InfeasibleRate { bound_s: f64, floor_s: f64 },
    #[error("stale reply to seq {seq} from module {module}")]
    StaleReply { seq: u32, module: u8 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// One application: its modules and their per-period reading rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSpec {
    pub app_id: u8,
    pub modules: usize,
    /// Sensors on each module; empty means one each.
    #[serde(default)]
    pub sensors_per_module: Vec<u8>,
    /// Readings per module per period in the normal state.
    pub rate_nml: u16,
    /// Readings per module per period in the low-power state.
    pub rate_lp: u16,
    pub period_s: f64,
}

impl AppSpec {
    pub fn new(app_id: u8, modules: usize, rate_nml: u16, rate_lp: u16, period_s: f64) -> Result<Self, VsdaError> {
        let spec = Self {
            app_id,
            modules,
            sensors_per_module: Vec::new(),
            rate_nml,
            rate_lp,
            period_s,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), VsdaError> {
        channel_for_app(self.app_id as u32)?;
        if self.modules == 0 || self.modules > u8::MAX as usize {
            return Err(VsdaError::InvalidSpec(format!("module count {} out of range", self.modules)));
        }
        if self.rate_lp == 0 || self.rate_nml < self.rate_lp {
            return Err(VsdaError::InvalidSpec("rates must satisfy 0 < rate_lp <= rate_nml".into()));
        }
        if !(self.period_s.is_finite() && self.period_s > 0.0) {
            return Err(VsdaError::InvalidSpec("period must be positive".into()));
        }
        if !self.sensors_per_module.is_empty()
            && (self.sensors_per_module.len() != self.modules || self.sensors_per_module.contains(&0))
        {
            return Err(VsdaError::InvalidSpec("sensors_per_module needs one positive entry per module".into()));
        }
        Ok(())
    }

    pub fn sensors_of(&self, module: usize) -> u8 {
        self.sensors_per_module.get(module).copied().unwrap_or(1)
    }

    pub fn rate_for(&self, state: DeviceState) -> u16 {
        match state {
            DeviceState::Normal => self.rate_nml,
            DeviceState::LowPower => self.rate_lp,
        }
    }

    pub fn channel(&self) -> ChannelId {
        channel_for_app(self.app_id as u32).expect("validated app id")
    }

    /// Σ_j Σ_k R_{j,k} for the given per-module states.
    pub fn total_rate(&self, states: &[DeviceState]) -> u32 {
        (0..self.modules)
            .map(|j| {
                let s = states.get(j).copied().unwrap_or(DeviceState::Normal);
                self.rate_for(s) as u32 * self.sensors_of(j) as u32
            })
            .sum()
    }
}

/// Shortest beacon interval that still fits a receive-sense-transmit cycle.
pub fn min_beacon_period_s(costs: &TaskCostTable) -> f64 {
    costs.cycle_duration().as_secs_f64()
}

/// τ = α·T / Σ_j Σ_k R. Fails with `InfeasibleRate` when the bound is below
/// the minimum slot; callers then run at the floor.
pub fn compute_beacon_period(
    alpha: f64,
    period_s: f64,
    spec: &AppSpec,
    states: &[DeviceState],
) -> Result<f64, VsdaError> {
    compute_beacon_period_with_floor(alpha, period_s, spec.total_rate(states), min_beacon_period_s(&TaskCostTable::default()))
}

pub fn compute_beacon_period_with_floor(alpha: f64, period_s: f64, total_rate: u32, floor_s: f64) -> Result<f64, VsdaError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(VsdaError::InvalidAlpha(alpha));
    }
    if total_rate == 0 {
        return Ok(period_s);
    }
    let bound = alpha * period_s / total_rate as f64;
    if bound < floor_s {
        return Err(VsdaError::InfeasibleRate {
            bound_s: bound,
            floor_s,
        });
    }
    Ok(bound)
}

/// Flags the first module still short of its target: V̂_j = V_j + 1.
pub fn set_sync_vector(v: &SyncVector, targets: &[u16]) -> SyncVector {
    set_sync_vector_filtered(v, targets, |_| true)
}

fn set_sync_vector_filtered(v: &SyncVector, targets: &[u16], eligible: impl Fn(usize) -> bool) -> SyncVector {
    let mut v_hat = v.clone();
    if let Some(j) = (0..v.len()).find(|&j| v.get(j) < targets.get(j).copied().unwrap_or(0) && eligible(j)) {
        v_hat.0[j] += 1;
    }
    v_hat
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorMode {
    Vsda,
    Polling,
}

impl fmt::Display for AggregatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregatorMode::Vsda => "vsda",
            AggregatorMode::Polling => "polling",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregatorConfig {
    pub mode: AggregatorMode,
    pub reattempt_limit: u32,
    pub keep_alive: bool,
    /// Prefer an unmet NML module over one predicted LP.
    pub skip_lp: bool,
    /// Rolling horizon of the α estimate.
    pub alpha_window: usize,
    /// Lower clamp on α when sizing τ.
    pub min_alpha: f64,
    /// τ is recomputed once α moves by more than this.
    pub alpha_tolerance: f64,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            mode: AggregatorMode::Vsda,
            reattempt_limit: 3,
            keep_alive: true,
            skip_lp: true,
            alpha_window: 100,
            min_alpha: 0.1,
            alpha_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solicitation {
    pub seq: u32,
    pub module: u8,
    pub first_emit: SimTime,
    /// Extra sends after the first.
    pub reattempts: u32,
    pub v: SyncVector,
    pub v_hat: SyncVector,
}

/// Things the aggregator did, for the event log.
#[derive(Debug, Clone, PartialEq)]
pub enum AggEvent {
    Solicit { seq: u32, module: u8 },
    Reattempt { seq: u32, module: u8, attempt: u32 },
    SolicitLost { seq: u32, module: u8 },
    KeepAlive { seq: u32 },
    SensorRx { seq: u32, module: u8, delay: SimTime, gen_delay: SimTime, v: SyncVector },
    Stale { seq: u32, module: u8 },
    Rollover { period: u64 },
    Tau { tau: SimTime, alpha: f64, infeasible: bool },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregatorStats {
    pub solicitations: u64,
    pub received: u64,
    pub lost: u64,
    pub stale: u64,
    pub beacons: u64,
    pub infeasible: u64,
}

/// Per-application aggregator state.
#[derive(Debug, Clone)]
pub struct AggregatorState {
    pub spec: AppSpec,
    pub config: AggregatorConfig,
    pub v: SyncVector,
    pub v_hat: SyncVector,
    /// Last reported device states.
    pub d: Vec<DeviceState>,
    /// Estimated device states.
    pub d_hat: Vec<DeviceState>,
    /// Last reported usable energy per module, joules.
    pub last_energy_j: Vec<f64>,
    pub targets: Vec<u16>,
    pub rates: Vec<u16>,
    pub alpha: f64,
    alpha_log: VecDeque<bool>,
    tau_alpha: f64,
    pub tau: SimTime,
    pub period: u64,
    pub period_start: SimTime,
    next_seq: u32,
    pub outstanding: Option<Solicitation>,
    skip_once: Option<usize>,
    rr_cursor: usize,
    actuator: Option<ActuatorControlMsg>,
    floor_s: f64,
    pub stats: AggregatorStats,
}

impl AggregatorState {
    pub fn new(spec: AppSpec, config: AggregatorConfig, costs: &TaskCostTable) -> Result<Self, VsdaError> {
        spec.validate()?;
        let m = spec.modules;
        let mut s = Self {
            v: SyncVector::zeros(m),
            v_hat: SyncVector::zeros(m),
            d: vec![DeviceState::Normal; m],
            d_hat: vec![DeviceState::Normal; m],
            last_energy_j: vec![0.0; m],
            targets: vec![spec.rate_nml; m],
            rates: vec![spec.rate_nml; m],
            alpha: 1.0,
            alpha_log: VecDeque::new(),
            tau_alpha: 1.0,
            tau: SimTime::ZERO,
            period: 0,
            period_start: SimTime::ZERO,
            next_seq: 0,
            outstanding: None,
            skip_once: None,
            rr_cursor: 0,
            actuator: None,
            floor_s: min_beacon_period_s(costs),
            stats: AggregatorStats::default(),
            spec,
            config,
        };
        s.latch_targets();
        s.recompute_tau();
        Ok(s)
    }

    pub fn period(&self) -> SimTime {
        SimTime::from_secs_f64(self.spec.period_s)
    }

    pub fn period_end(&self) -> SimTime {
        self.period_start + self.period()
    }

    /// Replaces the estimated states; targets change only at the next rollover.
    pub fn set_estimates(&mut self, d_hat: &[DeviceState]) {
        self.d_hat.copy_from_slice(&d_hat[..self.spec.modules]);
        self.rates = self.d_hat.iter().map(|&s| self.spec.rate_for(s)).collect();
    }

    fn latch_targets(&mut self) {
        self.targets = match self.config.mode {
            AggregatorMode::Vsda => self.d_hat.iter().map(|&s| self.spec.rate_for(s)).collect(),
            AggregatorMode::Polling => vec![self.spec.rate_nml; self.spec.modules],
        };
    }

    /// Records whether an estimate matched the state later observed, and
    /// returns the updated α.
    pub fn record_estimate(&mut self, predicted: DeviceState, actual: DeviceState) -> f64 {
        self.alpha_log.push_back(predicted == actual);
        while self.alpha_log.len() > self.config.alpha_window.max(1) {
            self.alpha_log.pop_front();
        }
        self.alpha = update_alpha_window(&self.alpha_log);
        self.alpha
    }

    /// Recomputes τ if α drifted past the tolerance. Returns the event when it did.
    pub fn maybe_recompute_tau(&mut self) -> Option<AggEvent> {
        if (self.alpha - self.tau_alpha).abs() > self.config.alpha_tolerance {
            Some(self.recompute_tau())
        } else {
            None
        }
    }

    fn recompute_tau(&mut self) -> AggEvent {
        let (alpha, total) = match self.config.mode {
            AggregatorMode::Vsda => (self.alpha.max(self.config.min_alpha), self.spec.total_rate(&self.d_hat_targets())),
            AggregatorMode::Polling => (1.0, self.spec.total_rate(&vec![DeviceState::Normal; self.spec.modules])),
        };
        self.tau_alpha = self.alpha;
        let (tau_s, infeasible) =
            match compute_beacon_period_with_floor(alpha.min(1.0), self.spec.period_s, total, self.floor_s) {
                Ok(t) => (t, false),
                Err(_) => (self.floor_s, true),
            };
        if infeasible {
            self.stats.infeasible += 1;
        }
        self.tau = SimTime::from_secs_f64(tau_s).max(SimTime(1));
        AggEvent::Tau {
            tau: self.tau,
            alpha,
            infeasible,
        }
    }

    fn d_hat_targets(&self) -> Vec<DeviceState> {
        self.targets
            .iter()
            .map(|&t| if t >= self.spec.rate_nml { DeviceState::Normal } else { DeviceState::LowPower })
            .collect()
    }

    /// Re-latches targets from the current estimates and resizes τ; used
    /// once estimates exist at start-up.
    pub fn restart_period(&mut self) -> AggEvent {
        self.latch_targets();
        self.recompute_tau()
    }

    /// Instant of the first beacon in the current period.
    pub fn first_beacon(&self) -> SimTime {
        self.period_start + SimTime(self.tau.micros() / 2)
    }

    /// Closes the period: unanswered solicitations are lost and vectors reset.
    pub fn rollover(&mut self, now: SimTime) -> Vec<AggEvent> {
        let mut ev = Vec::new();
        if let Some(s) = self.outstanding.take() {
            self.stats.lost += 1;
            ev.push(AggEvent::SolicitLost {
                seq: s.seq,
                module: s.module,
            });
        }
        self.period += 1;
        self.period_start = now;
        self.v = SyncVector::zeros(self.spec.modules);
        self.v_hat = self.v.clone();
        self.skip_once = None;
        self.rr_cursor = 0;
        self.latch_targets();
        ev.push(AggEvent::Rollover { period: self.period });
        ev.push(self.recompute_tau());
        ev
    }

    /// Queues an actuator command for the next beacon.
    pub fn queue_actuation(&mut self, msg: ActuatorControlMsg) {
        self.actuator = Some(msg);
    }

    fn build_beacon(&mut self, seq: u32, v: SyncVector, v_hat: SyncVector) -> Beacon {
        let rate_current: Vec<u16> = self.d.iter().map(|&s| self.spec.rate_for(s)).collect();
        self.stats.beacons += 1;
        Beacon {
            app_id: self.spec.app_id,
            seq,
            rate_control: RateControlMsg {
                rate_current,
                rate_new: self.rates.clone(),
            },
            app_synch: AppSynchMsg {
                sync_current: v,
                sync_new: v_hat,
            },
            actuator_control: self.actuator.take(),
        }
    }

    /// Resends the outstanding solicitation if the reattempt budget allows;
    /// otherwise marks it lost. Returns `Some(beacon)` on a resend.
    pub fn handle_reattempt(&mut self, _now: SimTime, events: &mut Vec<AggEvent>) -> Option<Beacon> {
        let s = self.outstanding.as_mut()?;
        if s.reattempts < self.config.reattempt_limit {
            s.reattempts += 1;
            let (seq, module, attempt, v, v_hat) = (s.seq, s.module, s.reattempts, s.v.clone(), s.v_hat.clone());
            events.push(AggEvent::Reattempt { seq, module, attempt });
            return Some(self.build_beacon(seq, v, v_hat));
        }
        let s = self.outstanding.take().expect("checked above");
        self.stats.lost += 1;
        self.v_hat = self.v.clone();
        self.skip_once = Some(s.module as usize);
        events.push(AggEvent::SolicitLost {
            seq: s.seq,
            module: s.module,
        });
        None
    }

    fn choose_module(&mut self) -> Option<usize> {
        let m = self.spec.modules;
        let unmet = |j: usize, this: &Self| this.v.get(j) < this.targets[j];
        let skip = self.skip_once.take();
        match self.config.mode {
            AggregatorMode::Polling => {
                let pick = (0..m)
                    .map(|i| (self.rr_cursor + i) % m)
                    .find(|&j| unmet(j, self) && Some(j) != skip)
                    .or_else(|| (0..m).map(|i| (self.rr_cursor + i) % m).find(|&j| unmet(j, self)));
                if let Some(j) = pick {
                    self.rr_cursor = (j + 1) % m;
                }
                pick
            }
            AggregatorMode::Vsda => {
                let nml_unmet = (0..m).any(|j| {
                    unmet(j, self) && self.d_hat[j] == DeviceState::Normal && Some(j) != skip
                });
                let eligible = |j: usize| {
                    Some(j) != skip
                        && !(self.config.skip_lp && nml_unmet && self.d_hat[j] == DeviceState::LowPower)
                };
                let v_hat = set_sync_vector_filtered(&self.v, &self.targets, eligible);
                let v_hat = if v_hat == self.v { set_sync_vector(&self.v, &self.targets) } else { v_hat };
                (0..m).find(|&j| v_hat.get(j) > self.v.get(j))
            }
        }
    }

    /// Produces the beacon for a scheduled instant: a reattempt, a fresh
    /// solicitation, or a keep-alive. `None` when nothing needs sending.
    pub fn emit_beacon(&mut self, now: SimTime) -> (Option<Beacon>, Vec<AggEvent>) {
        let mut events = Vec::new();
        if self.outstanding.is_some() {
            if let Some(b) = self.handle_reattempt(now, &mut events) {
                return (Some(b), events);
            }
        }
        let seq = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        match self.choose_module() {
            Some(j) => {
                let mut v_hat = self.v.clone();
                v_hat.0[j] += 1;
                self.v_hat = v_hat.clone();
                self.stats.solicitations += 1;
                self.outstanding = Some(Solicitation {
                    seq,
                    module: j as u8,
                    first_emit: now,
                    reattempts: 0,
                    v: self.v.clone(),
                    v_hat: v_hat.clone(),
                });
                events.push(AggEvent::Solicit { seq, module: j as u8 });
                let v = self.v.clone();
                (Some(self.build_beacon(seq, v, v_hat)), events)
            }
            None if self.config.keep_alive => {
                events.push(AggEvent::KeepAlive { seq });
                let v = self.v.clone();
                (Some(self.build_beacon(seq, v.clone(), v)), events)
            }
            None => {
                self.next_seq = self.next_seq.wrapping_sub(1);
                (None, events)
            }
        }
    }

    /// Accepts a sensor-data packet answering the outstanding solicitation.
    pub fn on_sensor_data(&mut self, pkt: &SensorDataPacket, now: SimTime) -> Result<AggEvent, VsdaError> {
        let matches = matches!(&self.outstanding, Some(s) if s.seq == pkt.in_reply_to && s.module == pkt.module_id);
        if !matches || pkt.app_id != self.spec.app_id {
            self.stats.stale += 1;
            return Err(VsdaError::StaleReply {
                seq: pkt.in_reply_to,
                module: pkt.module_id,
            });
        }
        let s = self.outstanding.take().expect("matched above");
        let j = s.module as usize;
        self.v.0[j] = s.v_hat.get(j);
        self.v_hat = self.v.clone();
        self.d[j] = pkt.device_state;
        self.last_energy_j[j] = pkt.energy_uj as f64 * 1e-6;
        self.stats.received += 1;
        let sampled = pkt
            .payload
            .readings
            .iter()
            .map(|r| SimTime(r.sample_time_ms as u64 * 1000))
            .min()
            .unwrap_or(now);
        Ok(AggEvent::SensorRx {
            seq: s.seq,
            module: s.module,
            delay: now.saturating_sub(s.first_emit),
            gen_delay: now.saturating_sub(sampled),
            v: self.v.clone(),
        })
    }

    /// Polling baseline: the next round-robin beacon, ignoring state estimates.
    pub fn polling_baseline_step(&mut self, now: SimTime) -> (Option<Beacon>, Vec<AggEvent>) {
        debug_assert_eq!(self.config.mode, AggregatorMode::Polling);
        self.emit_beacon(now)
    }
}

/// Fraction of correct entries in a non-empty estimate log; 1.0 when empty.
pub fn update_alpha_window(log: &VecDeque<bool>) -> f64 {
    if log.is_empty() {
        return 1.0;
    }
    log.iter().filter(|&&ok| ok).count() as f64 / log.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Reading, SensorDataMsg};

    fn spec(modules: usize, nml: u16, lp: u16) -> AppSpec {
        AppSpec::new(1, modules, nml, lp, 3600.0).unwrap()
    }

    fn agg(spec: AppSpec, cfg: AggregatorConfig) -> AggregatorState {
        AggregatorState::new(spec, cfg, &TaskCostTable::default()).unwrap()
    }

    fn reply(b: &Beacon, module: u8) -> SensorDataPacket {
        let payload = SensorDataMsg::new(b.app_id, module, vec![Reading::from_value(0, 21.5, 0)]).unwrap();
        SensorDataPacket::new(b.seq, DeviceState::Normal, 500, payload).unwrap()
    }

    #[test]
    fn tau_examples() {
        let one = spec(1, 10, 5);
        let tau = compute_beacon_period(0.98, 3600.0, &one, &[DeviceState::Normal]).unwrap();
        assert!(tau <= 352.8 + 1e-9);
        let two = spec(2, 10, 5);
        let nml = [DeviceState::Normal; 2];
        assert_eq!(compute_beacon_period(1.0, 3600.0, &two, &nml).unwrap(), 180.0);
        let half = compute_beacon_period(0.5, 3600.0, &two, &nml).unwrap();
        assert_eq!(half, 90.0);
    }

    #[test]
    fn tau_rejects_bad_alpha_and_flags_infeasible() {
        let s = spec(1, 10, 5);
        assert!(matches!(compute_beacon_period(0.0, 3600.0, &s, &[DeviceState::Normal]), Err(VsdaError::InvalidAlpha(_))));
        assert!(matches!(compute_beacon_period(1.5, 3600.0, &s, &[DeviceState::Normal]), Err(VsdaError::InvalidAlpha(_))));
        let err = compute_beacon_period(1.0, 1.0, &s, &[DeviceState::Normal]).unwrap_err();
        assert!(matches!(err, VsdaError::InfeasibleRate { .. }));
    }

    #[test]
    fn sync_vector_examples() {
        assert_eq!(set_sync_vector(&vec![0, 0].into(), &[3, 1]), vec![1, 0].into());
        assert_eq!(set_sync_vector(&vec![3, 0].into(), &[3, 1]), vec![3, 1].into());
        assert_eq!(set_sync_vector(&vec![3, 1].into(), &[3, 1]), vec![3, 1].into());
    }

    #[test]
    fn beacon_sequence_follows_replies() {
        let mut a = agg(spec(2, 3, 1), AggregatorConfig::default());
        let (b0, _) = a.emit_beacon(SimTime(0));
        let b0 = b0.unwrap();
        assert_eq!(b0.app_synch.sync_current, vec![0, 0].into());
        assert_eq!(b0.app_synch.sync_new, vec![1, 0].into());
        a.on_sensor_data(&reply(&b0, 0), SimTime(200_000)).unwrap();
        assert_eq!(a.v, vec![1, 0].into());
        let (b1, _) = a.emit_beacon(SimTime(1_000_000));
        let b1 = b1.unwrap();
        assert_eq!(b1.seq, 1);
        assert_eq!(b1.app_synch.sync_new, vec![2, 0].into());
    }

    #[test]
    fn duplicate_and_post_rollover_replies_are_stale() {
        let mut a = agg(spec(2, 3, 1), AggregatorConfig::default());
        let b = a.emit_beacon(SimTime(0)).0.unwrap();
        a.on_sensor_data(&reply(&b, 0), SimTime(10)).unwrap();
        assert!(matches!(a.on_sensor_data(&reply(&b, 0), SimTime(20)), Err(VsdaError::StaleReply { .. })));
        assert_eq!(a.v, vec![1, 0].into());
        let b = a.emit_beacon(SimTime(30)).0.unwrap();
        a.rollover(SimTime(3_600_000_000));
        assert!(matches!(a.on_sensor_data(&reply(&b, 0), SimTime(3_600_000_001)), Err(VsdaError::StaleReply { .. })));
        assert_eq!(a.stats.stale, 2);
        assert_eq!(a.stats.lost, 1);
    }

    #[test]
    fn reattempts_then_loss() {
        let mut a = agg(spec(2, 3, 1), AggregatorConfig::default());
        let first = a.emit_beacon(SimTime(0)).0.unwrap();
        for k in 1..=3 {
            let (b, ev) = a.emit_beacon(SimTime(k));
            let b = b.unwrap();
            assert_eq!(b.seq, first.seq);
            assert_eq!(b.app_synch, first.app_synch);
            assert!(matches!(ev[0], AggEvent::Reattempt { .. }));
        }
        let (b, ev) = a.emit_beacon(SimTime(4));
        assert!(matches!(ev[0], AggEvent::SolicitLost { seq: 0, module: 0 }));
        // The lost module is skipped once in favour of the next unmet one.
        assert_eq!(b.unwrap().app_synch.sync_new, vec![0, 1].into());
        assert_eq!(a.stats.lost, 1);
    }

    #[test]
    fn zero_reattempts_loses_immediately() {
        let cfg = AggregatorConfig {
            reattempt_limit: 0,
            ..Default::default()
        };
        let mut a = agg(spec(1, 3, 1), cfg);
        a.emit_beacon(SimTime(0));
        let (_, ev) = a.emit_beacon(SimTime(1));
        assert!(matches!(ev[0], AggEvent::SolicitLost { .. }));
    }

    #[test]
    fn keep_alive_when_targets_met() {
        let mut a = agg(spec(1, 1, 1), AggregatorConfig::default());
        let b = a.emit_beacon(SimTime(0)).0.unwrap();
        a.on_sensor_data(&reply(&b, 0), SimTime(1)).unwrap();
        let (b, ev) = a.emit_beacon(SimTime(2));
        let b = b.unwrap();
        assert_eq!(b.app_synch.sync_new, b.app_synch.sync_current);
        assert!(matches!(ev[0], AggEvent::KeepAlive { .. }));
        a.config.keep_alive = false;
        assert!(a.emit_beacon(SimTime(3)).0.is_none());
    }

    #[test]
    fn polling_alternates() {
        let cfg = AggregatorConfig {
            mode: AggregatorMode::Polling,
            ..Default::default()
        };
        let mut a = agg(spec(2, 10, 5), cfg);
        let mut order = Vec::new();
        for k in 0..6 {
            let b = a.polling_baseline_step(SimTime(k)).0.unwrap();
            let j = b.app_synch.solicited_module().unwrap();
            order.push(j);
            a.on_sensor_data(&reply(&b, j as u8), SimTime(k)).unwrap();
        }
        assert_eq!(order, vec![0, 1, 0, 1, 0, 1]);
        assert_eq!(a.tau, SimTime::from_secs_f64(180.0));
    }

    #[test]
    fn skip_lp_prefers_nml_module() {
        let mut a = agg(spec(2, 3, 1), AggregatorConfig::default());
        a.set_estimates(&[DeviceState::LowPower, DeviceState::Normal]);
        a.rollover(SimTime(0));
        let b = a.emit_beacon(SimTime(1)).0.unwrap();
        assert_eq!(b.app_synch.solicited_module(), Some(1));
        a.config.skip_lp = false;
        a.outstanding = None;
        let b = a.emit_beacon(SimTime(2)).0.unwrap();
        assert_eq!(b.app_synch.solicited_module(), Some(0));
    }

    #[test]
    fn alpha_tracks_window() {
        let mut a = agg(spec(1, 10, 5), AggregatorConfig::default());
        for k in 0..200 {
            let ok = k % 2 == 0;
            a.record_estimate(DeviceState::Normal, if ok { DeviceState::Normal } else { DeviceState::LowPower });
        }
        assert!((a.alpha - 0.5).abs() < 1e-12);
        assert!(a.maybe_recompute_tau().is_some());
        assert_eq!(a.tau, SimTime::from_secs_f64(180.0));
    }
}
