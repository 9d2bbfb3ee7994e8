//! The battery-less device runtime: device state, task state machine, task
//! execution and the federated energy manager, plus the FH and Central
//! storage baselines.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{split_harvest, EnergyBuffer, EnergyError, FederatedStore, StepOutcome};
use crate::protocol::{ActuatorControlMsg, Beacon, Reading};
use crate::time::SimTime;
use crate::vsda::AppSpec;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("illegal {kind} transition {from} -> {to}")]
    IllegalTransition {
        kind: TaskKind,
        from: TaskState,
        to: TaskState,
    },
    #[error("{kind} needs {needed_j:e} J but only {usable_j:e} J is usable")]
    InsufficientEnergy {
        kind: TaskKind,
        needed_j: f64,
        usable_j: f64,
    },
    #[error("{0} is not running")]
    NotRunning(TaskKind),
    #[error("another task ({0}) is already running")]
    Busy(TaskKind),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("invalid device config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeviceState {
    #[serde(rename = "LP")]
    LowPower,
    #[serde(rename = "NML")]
    Normal,
}

impl DeviceState {
    pub fn wire_code(self) -> u8 {
        match self {
            DeviceState::LowPower => 0,
            DeviceState::Normal => 1,
        }
    }

    pub fn from_wire_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DeviceState::LowPower),
            1 => Some(DeviceState::Normal),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "LP" => Some(DeviceState::LowPower),
            "NML" => Some(DeviceState::Normal),
            _ => None,
        }
    }
}

impl fmt::Display for DeviceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeviceState::LowPower => "LP",
            DeviceState::Normal => "NML",
        })
    }
}

/// LP when the available energy is at or below the threshold.
pub fn select_device_state(energy_j: f64, threshold_j: f64) -> DeviceState {
    if energy_j <= threshold_j {
        DeviceState::LowPower
    } else {
        DeviceState::Normal
    }
}

/// Every sensor of `module` gets the application's rate for `state`.
pub fn assign_rates(spec: &AppSpec, module: usize, state: DeviceState) -> Vec<u16> {
    let sensors = spec.sensors_of(module);
    vec![spec.rate_for(state); sensors as usize]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Receive,
    Sense,
    Transmit,
    Control,
    Log,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Receive,
        TaskKind::Sense,
        TaskKind::Transmit,
        TaskKind::Control,
        TaskKind::Log,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn uses_radio(self) -> bool {
        matches!(self, TaskKind::Receive | TaskKind::Transmit)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.to_string() == s)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Receive => "receive",
            TaskKind::Sense => "sense",
            TaskKind::Transmit => "transmit",
            TaskKind::Control => "control",
            TaskKind::Log => "log",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskState {
    Ready,
    Running,
    Blocked,
    Suspended,
}

impl TaskState {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ready" => Some(TaskState::Ready),
            "running" => Some(TaskState::Running),
            "blocked" => Some(TaskState::Blocked),
            "suspended" => Some(TaskState::Suspended),
            _ => None,
        }
    }
}

impl fmt::Display for TaskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskState::Ready => "ready",
            TaskState::Running => "running",
            TaskState::Blocked => "blocked",
            TaskState::Suspended => "suspended",
        })
    }
}

/// Edges of the task state diagram. Only a ready task is dispatched, so
/// blocked and suspended tasks pass through `Ready` on their way to `Running`.
pub const TASK_EDGES: [(TaskState, TaskState); 10] = [
    (TaskState::Suspended, TaskState::Ready),
    (TaskState::Suspended, TaskState::Blocked),
    (TaskState::Blocked, TaskState::Ready),
    (TaskState::Blocked, TaskState::Suspended),
    (TaskState::Ready, TaskState::Running),
    (TaskState::Ready, TaskState::Blocked),
    (TaskState::Ready, TaskState::Suspended),
    (TaskState::Running, TaskState::Suspended),
    (TaskState::Running, TaskState::Ready),
    (TaskState::Running, TaskState::Blocked),
];

pub fn is_legal_transition(from: TaskState, to: TaskState) -> bool {
    TASK_EDGES.contains(&(from, to))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskCost {
    pub duration_ms: f64,
    pub energy_uj: f64,
}

impl TaskCost {
    pub const fn new(duration_ms: f64, energy_uj: f64) -> Self {
        Self { duration_ms, energy_uj }
    }

    pub fn energy_j(&self) -> f64 {
        self.energy_uj * 1e-6
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_millis_f64(self.duration_ms)
    }
}

/// Per-task duration and energy. Receive, Sense and Transmit are measured
/// values for an MSP430 with a BLE transceiver; Control and Log are assumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskCostTable {
    pub receive: TaskCost,
    pub sense: TaskCost,
    pub transmit: TaskCost,
    pub control: TaskCost,
    pub log: TaskCost,
}

impl Default for TaskCostTable {
    fn default() -> Self {
        let sense = TaskCost::new(12.030, 19.066);
        Self {
            receive: TaskCost::new(58.483, 92.931),
            sense,
            transmit: TaskCost::new(52.558, 67.891),
            control: sense,
            log: TaskCost::new(5.0, 5.0),
        }
    }
}

impl TaskCostTable {
    pub fn get(&self, kind: TaskKind) -> TaskCost {
        match kind {
            TaskKind::Receive => self.receive,
            TaskKind::Sense => self.sense,
            TaskKind::Transmit => self.transmit,
            TaskKind::Control => self.control,
            TaskKind::Log => self.log,
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        for kind in TaskKind::ALL {
            let c = self.get(kind);
            if !(c.duration_ms > 0.0 && c.energy_uj > 0.0 && c.duration_ms.is_finite() && c.energy_uj.is_finite()) {
                return Err(DeviceError::Config(format!("{kind} cost must be positive")));
            }
        }
        Ok(())
    }

    /// Receive + Sense + Transmit.
    pub fn cycle_energy_j(&self) -> f64 {
        self.receive.energy_j() + self.sense.energy_j() + self.transmit.energy_j()
    }

    pub fn cycle_duration(&self) -> SimTime {
        self.receive.duration() + self.sense.duration() + self.transmit.duration()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadCost {
    pub time_us: f64,
    pub energy_nj: f64,
}

/// Cost of one invocation of the on-device managers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtemOverheadTable {
    pub task_manager: OverheadCost,
    pub energy_manager: OverheadCost,
    pub overall: OverheadCost,
}

impl Default for AtemOverheadTable {
    fn default() -> Self {
        Self {
            task_manager: OverheadCost {
                time_us: 0.379,
                energy_nj: 0.493,
            },
            energy_manager: OverheadCost {
                time_us: 0.198,
                energy_nj: 0.217,
            },
            overall: OverheadCost {
                time_us: 0.582,
                energy_nj: 0.782,
            },
        }
    }
}

impl AtemOverheadTable {
    pub fn invocation_energy_j(&self) -> f64 {
        self.overall.energy_nj * 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyStrategy {
    /// Task-aware Λ/λ split across two capacitors.
    Atem,
    /// Two capacitors with a fixed, task-unaware split.
    Fh,
    /// One capacitor of the combined size serving every task.
    Central,
}

impl fmt::Display for EnergyStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnergyStrategy::Atem => "atem",
            EnergyStrategy::Fh => "fh",
            EnergyStrategy::Central => "central",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub strategy: EnergyStrategy,
    pub sense_capacitance_f: f64,
    pub radio_capacitance_f: f64,
    pub parallel_resistance_ohm: f64,
    pub efficiency: f64,
    pub leakage_fraction: f64,
    /// Brown-out voltage; energy below it cannot power the load.
    pub cutoff_voltage: f64,
    pub split_high: f64,
    pub split_low: f64,
    /// Share of harvest sent to the sense buffer under the FH baseline.
    pub fh_sense_share: f64,
    /// E_th; defaults to twice the receive-sense-transmit cycle energy.
    pub energy_threshold_j: Option<f64>,
    pub initial_voltage: f64,
    pub costs: TaskCostTable,
    #[serde(skip)]
    pub overhead: AtemOverheadTable,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            strategy: EnergyStrategy::Atem,
            sense_capacitance_f: 47e-6,
            radio_capacitance_f: 220e-6,
            parallel_resistance_ohm: 10e3,
            efficiency: 0.9,
            leakage_fraction: 0.01,
            cutoff_voltage: 1.8,
            split_high: 0.7,
            split_low: 0.3,
            fh_sense_share: 0.5,
            energy_threshold_j: None,
            initial_voltage: 0.0,
            costs: TaskCostTable::default(),
            overhead: AtemOverheadTable::default(),
        }
    }
}

impl DeviceConfig {
    pub fn threshold_j(&self) -> f64 {
        self.energy_threshold_j.unwrap_or(2.0 * self.costs.cycle_energy_j())
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        self.costs.validate()?;
        self.build_storage(f64::INFINITY)?;
        if !(0.0..=1.0).contains(&self.fh_sense_share) {
            return Err(DeviceError::Config("fh_sense_share must lie in [0, 1]".into()));
        }
        if self.threshold_j() < 0.0 {
            return Err(DeviceError::Config("energy_threshold_j must be non-negative".into()));
        }
        Ok(())
    }

    fn buffer(&self, capacitance_f: f64, saturation_mw: f64) -> Result<EnergyBuffer, EnergyError> {
        Ok(EnergyBuffer::new(
            capacitance_f,
            self.parallel_resistance_ohm,
            self.efficiency,
            self.leakage_fraction,
        )?
        .with_cutoff(self.cutoff_voltage)
        .with_saturation(saturation_mw)
        .with_voltage(self.initial_voltage))
    }

    /// Builds the storage for this strategy. `saturation_mw` is the peak
    /// harvest power of the device's trace.
    pub fn build_storage(&self, saturation_mw: f64) -> Result<Storage, DeviceError> {
        Ok(match self.strategy {
            EnergyStrategy::Central => Storage::Single(self.buffer(
                self.sense_capacitance_f + self.radio_capacitance_f,
                saturation_mw,
            )?),
            EnergyStrategy::Atem | EnergyStrategy::Fh => Storage::Federated(FederatedStore::new(
                self.buffer(self.sense_capacitance_f, saturation_mw)?,
                self.buffer(self.radio_capacitance_f, saturation_mw)?,
                self.split_high,
                self.split_low,
            )?),
        })
    }

    /// Shares of harvested power (sense, radio) while the device idles
    /// between beacons.
    pub fn idle_shares(&self) -> (f64, f64) {
        match self.strategy {
            EnergyStrategy::Atem => (self.split_low, self.split_high),
            EnergyStrategy::Fh => (self.fh_sense_share, 1.0 - self.fh_sense_share),
            EnergyStrategy::Central => (1.0, 0.0),
        }
    }

    /// Long-run usable energy of an idle device fed constant power.
    pub fn steady_state_usable_j(&self, power_mw: f64, slot_s: f64, saturation_mw: f64) -> f64 {
        let storage = match self.build_storage(saturation_mw) {
            Ok(s) => s,
            Err(_) => return 0.0,
        };
        let (s_sense, s_radio) = self.idle_shares();
        match storage {
            Storage::Single(b) => (b.steady_state_energy_j(power_mw, slot_s) - b.floor_energy_j()).max(0.0),
            Storage::Federated(f) => {
                (f.sense.steady_state_energy_j(power_mw * s_sense, slot_s) - f.sense.floor_energy_j()).max(0.0)
                    + (f.radio.steady_state_energy_j(power_mw * s_radio, slot_s) - f.radio.floor_energy_j()).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Storage {
    Federated(FederatedStore),
    Single(EnergyBuffer),
}

/// Which physical buffer backs a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferRole {
    Sense,
    Radio,
}

impl BufferRole {
    pub fn for_task(kind: TaskKind) -> Self {
        if kind.uses_radio() {
            BufferRole::Radio
        } else {
            BufferRole::Sense
        }
    }
}

impl Storage {
    pub fn buffer(&self, role: BufferRole) -> &EnergyBuffer {
        match (self, role) {
            (Storage::Single(b), _) => b,
            (Storage::Federated(f), BufferRole::Sense) => &f.sense,
            (Storage::Federated(f), BufferRole::Radio) => &f.radio,
        }
    }

    pub fn buffer_mut(&mut self, role: BufferRole) -> &mut EnergyBuffer {
        match (self, role) {
            (Storage::Single(b), _) => b,
            (Storage::Federated(f), BufferRole::Sense) => &mut f.sense,
            (Storage::Federated(f), BufferRole::Radio) => &mut f.radio,
        }
    }

    pub fn usable_energy_j(&self) -> f64 {
        match self {
            Storage::Single(b) => b.usable_energy_j(),
            Storage::Federated(f) => f.usable_energy_j(),
        }
    }

    pub fn stored_energy_j(&self) -> f64 {
        match self {
            Storage::Single(b) => b.energy_j,
            Storage::Federated(f) => f.sense.energy_j + f.radio.energy_j,
        }
    }
}

/// Cumulative energy flows of one device, for the conservation audit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub initial_j: f64,
    pub harvested_j: f64,
    pub leaked_j: f64,
    pub overflow_j: f64,
    pub task_j: f64,
    pub overhead_j: f64,
    pub manager_calls: u64,
}

impl EnergyLedger {
    fn absorb(&mut self, o: StepOutcome) {
        self.harvested_j += o.harvested_j;
        self.leaked_j += o.leaked_j;
        self.overflow_j += o.overflow_j;
    }

    /// Expected stored energy given the recorded flows.
    pub fn expected_stored_j(&self) -> f64 {
        self.initial_j + self.harvested_j - self.leaked_j - self.overflow_j - self.task_j - self.overhead_j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceEvent {
    Task {
        kind: TaskKind,
        from: TaskState,
        to: TaskState,
    },
    State {
        from: DeviceState,
        to: DeviceState,
    },
}

/// A solicitation carried by the last beacon this device received.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BeaconContext {
    seq: u32,
    solicited: bool,
    sensed: bool,
}

/// Packet contents the engine turns into a sensor-data packet.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub in_reply_to: u32,
    pub reading: Reading,
    pub device_state: DeviceState,
    pub energy_uj: u32,
}

/// What a task completion produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Completion {
    pub sent: Option<Outgoing>,
    pub actuated: Option<ActuatorControlMsg>,
    /// Beacon seq consumed by a finished Receive, if one was heard.
    pub heard: Option<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ManagerOutcome {
    /// False when the MCU could not pay for the manager invocation.
    pub ran: bool,
    pub started: Option<(TaskKind, SimTime)>,
}

#[derive(Debug, Clone)]
pub struct DeviceRuntime {
    pub app_id: u8,
    pub module_id: u8,
    pub config: DeviceConfig,
    pub spec: AppSpec,
    pub storage: Storage,
    pub device_state: DeviceState,
    pub rates: Vec<u16>,
    pub ledger: EnergyLedger,
    /// Pins the device state regardless of stored energy.
    pub forced_state: Option<DeviceState>,
    tasks: [TaskState; 5],
    running: Option<(TaskKind, SimTime)>,
    inbox: Option<Beacon>,
    context: Option<BeaconContext>,
    pending: Option<Outgoing>,
    control: Option<ActuatorControlMsg>,
    log_pending: bool,
    sensor_seed: u64,
    events: Vec<(SimTime, DeviceEvent)>,
}

impl DeviceRuntime {
    pub fn new(app_id: u8, module_id: u8, spec: AppSpec, config: DeviceConfig, saturation_mw: f64) -> Result<Self, DeviceError> {
        config.validate()?;
        let storage = config.build_storage(saturation_mw)?;
        let initial = storage.stored_energy_j();
        let state = select_device_state(storage.usable_energy_j(), config.threshold_j());
        let rates = assign_rates(&spec, module_id as usize, state);
        Ok(Self {
            app_id,
            module_id,
            config,
            spec,
            storage,
            device_state: state,
            rates,
            ledger: EnergyLedger {
                initial_j: initial,
                ..Default::default()
            },
            // Sense and Transmit start suspended so Receive can become ready.
            forced_state: None,
            tasks: [TaskState::Suspended; 5],
            running: None,
            inbox: None,
            context: None,
            pending: None,
            control: None,
            log_pending: false,
            sensor_seed: (app_id as u64) << 8 | module_id as u64,
            events: Vec::new(),
        })
    }

    pub fn task_state(&self, kind: TaskKind) -> TaskState {
        self.tasks[kind.index()]
    }

    pub fn running(&self) -> Option<TaskKind> {
        self.running.map(|(k, _)| k)
    }

    pub fn receive_running(&self) -> bool {
        self.task_state(TaskKind::Receive) == TaskState::Running
    }

    pub fn threshold_j(&self) -> f64 {
        self.config.threshold_j()
    }

    pub fn usable_energy_j(&self) -> f64 {
        self.storage.usable_energy_j()
    }

    /// State implied by the energy stored right now.
    pub fn instant_state(&self) -> DeviceState {
        self.forced_state
            .unwrap_or_else(|| select_device_state(self.usable_energy_j(), self.threshold_j()))
    }

    pub fn buffer(&self, role: BufferRole) -> &EnergyBuffer {
        self.storage.buffer(role)
    }

    /// Usable energy in the buffer backing `kind`.
    pub fn energy_for(&self, kind: TaskKind) -> f64 {
        self.storage.buffer(BufferRole::for_task(kind)).usable_energy_j()
    }

    /// Whether `kind` could be paid for from its buffer right now.
    pub fn component_available(&self, role: BufferRole) -> bool {
        let cost = match role {
            BufferRole::Sense => self.config.costs.sense.energy_j(),
            BufferRole::Radio => self.config.costs.receive.energy_j(),
        };
        self.storage.buffer(role).usable_energy_j() >= cost
    }

    pub fn drain_events(&mut self) -> Vec<(SimTime, DeviceEvent)> {
        std::mem::take(&mut self.events)
    }

    /// Requests a single transition; fails unless it is an edge of the diagram.
    pub fn transition(&mut self, kind: TaskKind, to: TaskState, now: SimTime) -> Result<(), DeviceError> {
        let from = self.task_state(kind);
        if from == to {
            return Ok(());
        }
        if !is_legal_transition(from, to) {
            return Err(DeviceError::IllegalTransition { kind, from, to });
        }
        self.tasks[kind.index()] = to;
        self.events.push((now, DeviceEvent::Task { kind, from, to }));
        Ok(())
    }

    /// Moves a task toward `to`, routing through `Ready` where dispatch requires it.
    fn set(&mut self, kind: TaskKind, to: TaskState, now: SimTime) -> Result<(), DeviceError> {
        let from = self.task_state(kind);
        if to == TaskState::Running && matches!(from, TaskState::Blocked | TaskState::Suspended) {
            self.transition(kind, TaskState::Ready, now)?;
        }
        self.transition(kind, to, now)
    }

    fn mcu_powered(&self) -> bool {
        self.storage.buffer(BufferRole::Sense).usable_energy_j() >= self.config.overhead.invocation_energy_j()
    }

    fn sense_active(&self) -> bool {
        matches!(self.task_state(TaskKind::Sense), TaskState::Ready | TaskState::Running)
    }

    /// Routes one slot of harvested power into the storage according to the
    /// configured strategy.
    pub fn apply_energy_strategy(&mut self, harvest_power_mw: f64, slot_s: f64) -> Result<(), DeviceError> {
        let (to_sense, to_radio) = match self.config.strategy {
            EnergyStrategy::Atem => match &self.storage {
                // The MCU boots from the first-stage capacitor before it can
                // run the proportional charging controller.
                Storage::Federated(_) if !self.mcu_powered() => (harvest_power_mw, 0.0),
                Storage::Federated(f) => split_harvest(f, harvest_power_mw, self.sense_active())?,
                Storage::Single(_) => (harvest_power_mw, 0.0),
            },
            EnergyStrategy::Fh => {
                let s = harvest_power_mw * self.config.fh_sense_share;
                (s, harvest_power_mw - s)
            }
            EnergyStrategy::Central => (harvest_power_mw, 0.0),
        };
        match &mut self.storage {
            Storage::Single(b) => {
                let o = b.step(to_sense + to_radio, slot_s)?;
                self.ledger.absorb(o);
            }
            Storage::Federated(f) => {
                let a = f.sense.step(to_sense, slot_s)?;
                let b = f.radio.step(to_radio, slot_s)?;
                self.ledger.absorb(a);
                self.ledger.absorb(b);
            }
        }
        Ok(())
    }

    /// Stores a beacon heard while Receive is running; it is acted on when
    /// Receive completes.
    pub fn accept_beacon(&mut self, beacon: &Beacon) -> bool {
        if !self.receive_running() {
            return false;
        }
        self.inbox = Some(beacon.clone());
        true
    }

    /// True when a task is waiting only on energy that has now arrived.
    pub fn wants_wake(&self) -> bool {
        if self.running.is_some() || !self.mcu_powered() {
            return false;
        }
        let costs = &self.config.costs;
        let ready_and_funded = |kind: TaskKind| {
            self.task_state(kind) == TaskState::Ready && self.energy_for(kind) > costs.get(kind).energy_j()
        };
        ready_and_funded(TaskKind::Sense) || ready_and_funded(TaskKind::Transmit) || ready_and_funded(TaskKind::Control)
    }

    /// One invocation of the task and energy managers. `beacon_window` marks a
    /// wake-up at a scheduled beacon instant, the only time Receive is
    /// dispatched.
    pub fn run_managers(&mut self, now: SimTime, beacon_window: bool) -> Result<ManagerOutcome, DeviceError> {
        let overhead = self.config.overhead.invocation_energy_j();
        if self.storage.buffer_mut(BufferRole::Sense).draw(overhead).is_err() {
            return Ok(ManagerOutcome::default());
        }
        self.ledger.overhead_j += overhead;
        self.ledger.manager_calls += 1;

        let state = self.instant_state();
        if state != self.device_state {
            self.events.push((
                now,
                DeviceEvent::State {
                    from: self.device_state,
                    to: state,
                },
            ));
            self.device_state = state;
        }
        self.rates = assign_rates(&self.spec, self.module_id as usize, state);

        let started = self.step_task_manager(now, beacon_window)?;
        Ok(ManagerOutcome { ran: true, started })
    }

    /// Sets task states from the current solicitation context and buffer
    /// energies, dispatching at most one task. Returns the dispatched task and
    /// its completion time.
    pub fn step_task_manager(&mut self, now: SimTime, beacon_window: bool) -> Result<Option<(TaskKind, SimTime)>, DeviceError> {
        use TaskKind::*;
        use TaskState::*;
        let costs = self.config.costs.clone();

        // Sense
        if self.task_state(Sense) != Running {
            match self.context {
                Some(ctx) if ctx.solicited && !ctx.sensed => {
                    if self.running.is_none() && self.energy_for(Sense) > costs.sense.energy_j() {
                        self.set(Sense, Running, now)?;
                    } else {
                        self.set(Sense, Ready, now)?;
                    }
                }
                Some(ctx) if !ctx.solicited => self.set(Sense, Blocked, now)?,
                _ => self.set(Sense, Suspended, now)?,
            }
        }

        // Transmit
        if self.task_state(Transmit) != Running {
            if self.task_state(Sense) == Running || self.pending.is_some() {
                self.set(Transmit, Ready, now)?;
            } else if self.context.is_some() {
                self.set(Transmit, Blocked, now)?;
            } else {
                self.set(Transmit, Suspended, now)?;
            }
        }

        // Receive
        if self.task_state(Receive) != Running {
            let idle = self.task_state(Sense) == Suspended
                && self.task_state(Transmit) == Suspended
                && self.control.is_none()
                && !matches!(self.task_state(Log), Running);
            if idle {
                self.set(Receive, Ready, now)?;
            } else {
                self.set(Receive, Blocked, now)?;
            }
        }

        if self.running.is_none()
            && self.task_state(Transmit) == Ready
            && self.pending.is_some()
            && self.energy_for(Transmit) > costs.transmit.energy_j()
        {
            self.set(Transmit, Running, now)?;
        }
        if self.running.is_none()
            && beacon_window
            && self.task_state(Receive) == Ready
            && self.energy_for(Receive) > costs.receive.energy_j()
        {
            self.set(Receive, Running, now)?;
        }

        // Control runs after the Receive that delivered it.
        if self.task_state(Control) != Running {
            if self.control.is_some() {
                if self.running.is_none() && self.energy_for(Control) > costs.control.energy_j() {
                    self.set(Control, Running, now)?;
                } else {
                    self.set(Control, Ready, now)?;
                }
            } else {
                self.set(Control, Suspended, now)?;
            }
        }

        // Log is opportunistic: only with surplus energy once the cycle settles.
        if self.task_state(Log) != Running && self.log_pending {
            let settled = [Sense, Transmit, Control]
                .into_iter()
                .all(|k| !matches!(self.task_state(k), Ready | Running));
            if settled && self.running.is_none() {
                self.log_pending = false;
                if self.energy_for(Log) > self.threshold_j() + costs.log.energy_j() {
                    self.set(Log, Running, now)?;
                }
            }
        }

        // Dispatch whatever the rules above set running.
        let newly_running = TaskKind::ALL
            .into_iter()
            .find(|&k| self.task_state(k) == Running && self.running.is_none());
        match newly_running {
            Some(kind) => {
                let (done, _) = self.execute_task(kind, now)?;
                Ok(Some((kind, done)))
            }
            None => Ok(None),
        }
    }

    /// Pays for a running task and returns (completion time, energy drawn).
    pub fn execute_task(&mut self, kind: TaskKind, now: SimTime) -> Result<(SimTime, f64), DeviceError> {
        if self.task_state(kind) != TaskState::Running {
            return Err(DeviceError::NotRunning(kind));
        }
        if let Some((other, _)) = self.running {
            if other != kind {
                return Err(DeviceError::Busy(other));
            }
        }
        let cost = self.config.costs.get(kind);
        let role = BufferRole::for_task(kind);
        let usable = self.storage.buffer(role).usable_energy_j();
        if self.storage.buffer_mut(role).draw(cost.energy_j()).is_err() {
            self.transition(kind, TaskState::Ready, now)?;
            return Err(DeviceError::InsufficientEnergy {
                kind,
                needed_j: cost.energy_j(),
                usable_j: usable,
            });
        }
        self.ledger.task_j += cost.energy_j();
        let done = now + cost.duration();
        self.running = Some((kind, done));
        Ok((done, cost.energy_j()))
    }

    /// Finishes the running task and applies its effects. The caller runs
    /// the managers afterwards.
    pub fn complete_task(&mut self, kind: TaskKind, now: SimTime) -> Result<Completion, DeviceError> {
        match self.running {
            Some((k, _)) if k == kind => {}
            _ => return Err(DeviceError::NotRunning(kind)),
        }
        self.running = None;
        self.transition(kind, TaskState::Suspended, now)?;
        let mut out = Completion::default();
        match kind {
            TaskKind::Receive => {
                if let Some(b) = self.inbox.take() {
                    out.heard = Some(b.seq);
                    let j = self.module_id as usize;
                    let synch = &b.app_synch;
                    let solicited = j < synch.sync_new.len() && synch.sync_new.get(j) > synch.sync_current.get(j);
                    self.context = Some(BeaconContext {
                        seq: b.seq,
                        solicited,
                        sensed: false,
                    });
                    self.control = b.actuator_control.filter(|a| a.target_module == self.module_id);
                }
            }
            TaskKind::Sense => {
                let energy_uj = (self.usable_energy_j() * 1e6).min(u32::MAX as f64) as u32;
                let state = self.device_state;
                if let Some(ctx) = self.context.as_mut() {
                    ctx.sensed = true;
                    self.sensor_seed = self.sensor_seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let value = 20.0 + ((self.sensor_seed >> 40) % 1000) as f64 / 100.0;
                    self.pending = Some(Outgoing {
                        in_reply_to: ctx.seq,
                        reading: Reading::from_value(0, value, (now.micros() / 1000).min(u32::MAX as u64) as u32),
                        device_state: state,
                        energy_uj,
                    });
                }
                self.log_pending = true;
            }
            TaskKind::Transmit => {
                let mut sent = self.pending.take();
                if let Some(s) = sent.as_mut() {
                    s.device_state = self.instant_state();
                    s.energy_uj = (self.usable_energy_j() * 1e6).min(u32::MAX as f64) as u32;
                }
                out.sent = sent;
                self.context = None;
            }
            TaskKind::Control => {
                out.actuated = self.control.take();
                self.log_pending = true;
            }
            TaskKind::Log => {}
        }
        // A beacon that did not solicit this device needs no further work.
        if matches!(self.context, Some(ctx) if !ctx.solicited) && kind != TaskKind::Receive {
            self.context = None;
        }
        Ok(out)
    }

    /// Drops a non-soliciting beacon context once the managers have seen it.
    pub fn settle(&mut self) {
        if matches!(self.context, Some(ctx) if !ctx.solicited) {
            self.context = None;
        }
    }

    pub fn audit_error_j(&self) -> f64 {
        self.storage.stored_energy_j() - self.ledger.expected_stored_j()
    }
}
