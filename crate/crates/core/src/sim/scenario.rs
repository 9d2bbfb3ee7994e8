//! Scenario files and their expansion into concrete devices, traces and
//! aggregator settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceConfig, DeviceState, EnergyStrategy};
use crate::energy::HarvesterTrace;
use crate::forecast::{train, ForecastKind, ForecastModel, ModelParams, TrainConfig};
use crate::time::SimTime;
use crate::vsda::{AggregatorConfig, AggregatorMode, AppSpec};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted path of the offending field.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub app_id: u8,
    pub modules: usize,
    pub rate_nml: u16,
    pub rate_lp: u16,
    #[serde(default = "default_period")]
    pub period_s: f64,
    #[serde(default)]
    pub sensors_per_module: Vec<u8>,
}

fn default_period() -> f64 {
    3600.0
}

impl AppConfig {
    /// One sensor per module.
    pub fn new(app_id: u8, modules: usize, rate_nml: u16, rate_lp: u16, period_s: f64) -> Self {
        Self {
            app_id,
            modules,
            rate_nml,
            rate_lp,
            period_s,
            sensors_per_module: Vec::new(),
        }
    }

    pub fn spec(&self) -> AppSpec {
        AppSpec {
            app_id: self.app_id,
            modules: self.modules,
            sensors_per_module: self.sensors_per_module.clone(),
            rate_nml: self.rate_nml,
            rate_lp: self.rate_lp,
            period_s: self.period_s,
        }
    }
}

/// Solar-like harvester power: a slow cycle, on/off cloud cover with
/// exponential dwell times, and uniform noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTrace {
    pub mean_mw: f64,
    pub sample_interval_s: f64,
    pub cycle_period_s: f64,
    pub cycle_depth: f64,
    pub clear_mean_s: f64,
    pub cloud_mean_s: f64,
    /// Fraction of power left under cloud.
    pub cloud_attenuation: f64,
    pub noise: f64,
}

impl Default for SyntheticTrace {
    fn default() -> Self {
        Self {
            mean_mw: 1.5,
            sample_interval_s: 1.0,
            cycle_period_s: 900.0,
            cycle_depth: 0.5,
            clear_mean_s: 120.0,
            cloud_mean_s: 45.0,
            cloud_attenuation: 0.05,
            noise: 0.1,
        }
    }
}

impl SyntheticTrace {
    pub fn generate(&self, duration_s: f64, seed: u64) -> Result<HarvesterTrace, crate::energy::EnergyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (duration_s / self.sample_interval_s).ceil() as usize + 1;
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut clear = rng.gen_bool(self.clear_mean_s / (self.clear_mean_s + self.cloud_mean_s).max(1e-9));
        let dwell = |clear: bool, rng: &mut ChaCha8Rng| {
            let mean = if clear { self.clear_mean_s } else { self.cloud_mean_s };
            -mean * (1.0 - rng.gen::<f64>()).ln()
        };
        let mut switch_at = dwell(clear, &mut rng);
        let mut powers = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 * self.sample_interval_s;
            while t >= switch_at {
                clear = !clear;
                switch_at += dwell(clear, &mut rng).max(self.sample_interval_s);
            }
            let cycle = 1.0 + self.cycle_depth * (std::f64::consts::TAU * t / self.cycle_period_s + phase).sin();
            let cover = if clear { 1.0 } else { self.cloud_attenuation };
            let noise = 1.0 + self.noise * rng.gen_range(-1.0..1.0);
            powers.push((self.mean_mw * cycle * cover * noise).max(0.0));
        }
        HarvesterTrace::uniform(0.0, self.sample_interval_s, &powers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TraceConfig {
    Constant {
        power_mw: f64,
        #[serde(default = "one")]
        sample_interval_s: f64,
    },
    Synthetic(SyntheticTrace),
    /// CSV with header `time_s,power_mw`; relative paths resolve against
    /// the scenario file's directory.
    Csv { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig::Synthetic(SyntheticTrace::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Designation {
    /// Scale each trace so its time-averaged steady-state energy lands on
    /// the designated side of the threshold.
    Scale,
    /// Pin the device state directly.
    Clamp,
    /// Use traces as given.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    pub kind: ForecastKind,
    pub ewma_beta: f64,
    pub window: usize,
    /// Length of the historical trace an LSTM is trained on.
    pub history_s: f64,
    pub train: TrainConfig,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            kind: ForecastKind::Ewma,
            ewma_beta: 0.5,
            window: 10,
            history_s: 1800.0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlackoutConfig {
    /// `app_id.module`, module 0-based.
    pub device: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// Pins device states, keyed by `app_id.module`.
    pub clamp_state: BTreeMap<String, DeviceState>,
    /// Windows in which a device's radio cannot hear beacons.
    pub radio_blackouts: Vec<BlackoutConfig>,
    /// Per-device trace replacements, keyed by `app_id.module`.
    pub traces: BTreeMap<String, TraceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub slot_s: f64,
    /// Fraction of each app's modules designated low-power.
    pub lp_fraction: f64,
    pub designation: Designation,
    /// LP traces are scaled to this fraction of E_th.
    pub lp_target: f64,
    /// NML traces are scaled up to at least this multiple of E_th.
    pub nml_target: f64,
    pub propagation_delay_s: f64,
    pub apps: Vec<AppConfig>,
    pub device: DeviceConfig,
    pub aggregator: AggregatorConfig,
    pub forecaster: ForecasterConfig,
    pub trace: TraceConfig,
    pub overrides: Overrides,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 0,
            duration_s: 7200.0,
            slot_s: 0.01,
            lp_fraction: 0.0,
            designation: Designation::Scale,
            lp_target: 0.8,
            nml_target: 1.5,
            propagation_delay_s: 0.0,
            apps: Vec::new(),
            device: DeviceConfig::default(),
            aggregator: AggregatorConfig::default(),
            forecaster: ForecasterConfig::default(),
            trace: TraceConfig::default(),
            overrides: Overrides::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let path = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "<root>".into());
            ConfigError::new(path, msg)
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// Reads a scenario file; relative CSV trace paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |t: &mut TraceConfig| {
            if let TraceConfig::Csv { path } = t {
                if path.is_relative() {
                    *path = dir.join(&*path);
                }
            }
        };
        fix(&mut cfg.trace);
        cfg.overrides.traces.values_mut().for_each(fix);
        Ok(cfg)
    }

    pub fn with_strategy(mut self, strategy: EnergyStrategy) -> Self {
        self.device.strategy = strategy;
        self
    }

    pub fn with_mode(mut self, mode: AggregatorMode) -> Self {
        self.aggregator.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(path, format!("must be positive, got {v}")))
            }
        };
        positive("duration_s", self.duration_s)?;
        positive("slot_s", self.slot_s)?;
        if !(0.0..=1.0).contains(&self.lp_fraction) {
            return Err(ConfigError::new("lp_fraction", "must lie in [0, 1]"));
        }
        positive("lp_target", self.lp_target)?;
        positive("nml_target", self.nml_target)?;
        if self.lp_target > 1.0 || self.nml_target <= 1.0 {
            return Err(ConfigError::new("lp_target", "need lp_target <= 1 < nml_target"));
        }
        if !(self.propagation_delay_s >= 0.0 && self.propagation_delay_s.is_finite()) {
            return Err(ConfigError::new("propagation_delay_s", "must be non-negative"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, app) in self.apps.iter().enumerate() {
            app.spec()
                .validate()
                .map_err(|e| ConfigError::new(format!("apps[{i}]"), e.to_string()))?;
            if !ids.insert(app.app_id) {
                return Err(ConfigError::new(format!("apps[{i}].app_id"), "duplicate app id"));
            }
        }
        self.device
            .validate()
            .map_err(|e| ConfigError::new("device", e.to_string()))?;
        let a = &self.aggregator;
        if !(a.min_alpha > 0.0 && a.min_alpha <= 1.0) {
            return Err(ConfigError::new("aggregator.min_alpha", "must lie in (0, 1]"));
        }
        if a.alpha_window == 0 {
            return Err(ConfigError::new("aggregator.alpha_window", "must be positive"));
        }
        let f = &self.forecaster;
        if f.window == 0 || f.window > crate::forecast::MAX_WINDOW {
            return Err(ConfigError::new("forecaster.window", "must lie in 1..=10"));
        }
        if !(f.ewma_beta > 0.0 && f.ewma_beta <= 1.0) {
            return Err(ConfigError::new("forecaster.ewma_beta", "must lie in (0, 1]"));
        }
        if f.kind == ForecastKind::Lstm {
            f.train
                .validate()
                .map_err(|e| ConfigError::new("forecaster.train", e.to_string()))?;
        }
        for key in self.overrides.clamp_state.keys() {
            self.resolve_device(key)
                .map_err(|m| ConfigError::new(format!("overrides.clamp_state.{key}"), m))?;
        }
        for key in self.overrides.traces.keys() {
            self.resolve_device(key)
                .map_err(|m| ConfigError::new(format!("overrides.traces.{key}"), m))?;
        }
        for (i, b) in self.overrides.radio_blackouts.iter().enumerate() {
            self.resolve_device(&b.device)
                .map_err(|m| ConfigError::new(format!("overrides.radio_blackouts[{i}].device"), m))?;
            if !(b.start_s >= 0.0 && b.end_s > b.start_s) {
                return Err(ConfigError::new(format!("overrides.radio_blackouts[{i}]"), "need 0 <= start_s < end_s"));
            }
        }
        Ok(())
    }

    /// `"app_id.module"` → (app index, module).
    fn resolve_device(&self, key: &str) -> Result<(usize, usize), String> {
        let (a, m) = key.split_once('.').ok_or("expected `app_id.module`")?;
        let app_id: u8 = a.parse().map_err(|_| "bad app id")?;
        let module: usize = m.parse().map_err(|_| "bad module index")?;
        let idx = self
            .apps
            .iter()
            .position(|x| x.app_id == app_id)
            .ok_or_else(|| format!("no app with id {app_id}"))?;
        if module >= self.apps[idx].modules {
            return Err(format!("app {app_id} has no module {module}"));
        }
        Ok((idx, module))
    }
}

#[derive(Debug, Clone)]
pub struct DeviceSetup {
    pub config: DeviceConfig,
    pub trace: HarvesterTrace,
    /// State the trace was scaled toward, if any.
    pub designated: Option<DeviceState>,
    pub trace_scale: f64,
    pub forced_state: Option<DeviceState>,
    pub model: ForecastModel,
}

#[derive(Debug, Clone)]
pub struct AppSetup {
    pub spec: AppSpec,
    pub devices: Vec<DeviceSetup>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blackout {
    pub app: usize,
    pub module: usize,
    pub start: SimTime,
    pub end: SimTime,
}

/// A fully instantiated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration: SimTime,
    pub slot_s: f64,
    pub apps: Vec<AppSetup>,
    pub aggregator: AggregatorConfig,
    pub propagation_delay: SimTime,
    pub blackouts: Vec<Blackout>,
    pub config: ScenarioConfig,
}

impl Scenario {
    pub fn slot(&self) -> SimTime {
        SimTime::from_secs_f64(self.slot_s)
    }

    pub fn device_count(&self) -> usize {
        self.apps.iter().map(|a| a.devices.len()).sum()
    }
}

fn device_seed(seed: u64, app_id: u8, module: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((app_id as u64) << 32 | module as u64)
}

fn load_trace(cfg: &TraceConfig, duration_s: f64, seed: u64, path: &str) -> Result<HarvesterTrace, ConfigError> {
    let err = |e: crate::energy::EnergyError| ConfigError::new(path, e.to_string());
    match cfg {
        TraceConfig::Constant {
            power_mw,
            sample_interval_s,
        } => HarvesterTrace::constant(*power_mw, *sample_interval_s, duration_s).map_err(err),
        TraceConfig::Synthetic(s) => {
            if !(s.sample_interval_s > 0.0 && s.mean_mw >= 0.0 && s.cycle_period_s > 0.0) {
                return Err(ConfigError::new(path, "synthetic trace needs positive intervals and non-negative mean"));
            }
            s.generate(duration_s, seed).map_err(err)
        }
        TraceConfig::Csv { path: p } => HarvesterTrace::load_csv(p).map_err(err),
    }
}

/// Time-averaged steady-state usable energy of a lumped buffer fed `trace`
/// scaled by `k`. Independent of the storage strategy so paired runs share
/// traces.
fn mean_steady_usable(cfg: &DeviceConfig, powers: &[f64], slot_s: f64, k: f64) -> f64 {
    let lumped = DeviceConfig {
        strategy: EnergyStrategy::Central,
        ..cfg.clone()
    };
    let peak = powers.iter().copied().fold(0.0, f64::max) * k;
    powers
        .iter()
        .map(|&p| lumped.steady_state_usable_j(p * k, slot_s, peak.max(1e-12)))
        .sum::<f64>()
        / powers.len().max(1) as f64
}

/// Finds the trace scale putting the time-averaged steady-state energy on
/// the designated side of E_th.
pub fn designation_scale(
    cfg: &DeviceConfig,
    trace: &HarvesterTrace,
    slot_s: f64,
    state: DeviceState,
    lp_target: f64,
    nml_target: f64,
) -> Result<f64, String> {
    let powers = trace.powers();
    let th = cfg.threshold_j();
    let f = |k: f64| mean_steady_usable(cfg, &powers, slot_s, k);
    let (target, need_scale) = match state {
        DeviceState::LowPower => (lp_target * th, f(1.0) > lp_target * th),
        DeviceState::Normal => (nml_target * th, f(1.0) < nml_target * th),
    };
    if !need_scale {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = match state {
        DeviceState::LowPower => (0.0, 1.0),
        DeviceState::Normal => {
            let mut hi = 2.0;
            while f(hi) < target {
                hi *= 2.0;
                if hi > 1e9 {
                    return Err("trace carries no usable power".into());
                }
            }
            (hi / 2.0, hi)
        }
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Land strictly on the designated side.
    Ok(match state {
        DeviceState::LowPower => lo,
        DeviceState::Normal => hi,
    })
}

/// Expands a scenario config into devices, traces and forecasters.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario, ConfigError> {
    config.validate()?;
    let mut apps = Vec::with_capacity(config.apps.len());
    // Learned forecasters are fitted once per trace source and shared.
    let mut fitted: std::collections::HashMap<String, ForecastModel> = std::collections::HashMap::new();
    for (ai, app) in config.apps.iter().enumerate() {
        let spec = app.spec();
        let lp_count = (config.lp_fraction * app.modules as f64).round() as usize;
        let mut devices = Vec::with_capacity(app.modules);
        for j in 0..app.modules {
            let key = format!("{}.{}", app.app_id, j);
            let seed = device_seed(config.seed, app.app_id, j);
            let (tcfg, tpath) = match config.overrides.traces.get(&key) {
                Some(t) => (t, format!("overrides.traces.{key}")),
                None => (&config.trace, "trace".to_string()),
            };
            let mut trace = load_trace(tcfg, config.duration_s, seed, &tpath)?;
            // The last `lp_count` modules of each app are the LP ones.
            let designated = if j >= app.modules - lp_count {
                DeviceState::LowPower
            } else {
                DeviceState::Normal
            };
            let mut scale = 1.0;
            let mut forced = config.overrides.clamp_state.get(&key).copied();
            match config.designation {
                Designation::Scale => {
                    scale = designation_scale(
                        &config.device,
                        &trace,
                        config.slot_s,
                        designated,
                        config.lp_target,
                        config.nml_target,
                    )
                    .map_err(|m| ConfigError::new(format!("apps[{ai}].modules[{j}]"), m))?;
                    if scale != 1.0 {
                        trace = trace.scaled(scale);
                    }
                }
                Designation::Clamp => forced = forced.or(Some(designated)),
                Designation::None => {}
            }
            let base = match fitted.get(&tpath) {
                Some(m) => m.clone(),
                None => {
                    let m = build_model(&config.forecaster, tcfg, config.seed, &tpath)?;
                    fitted.insert(tpath.clone(), m.clone());
                    m
                }
            };
            let model = rescale_model(base, scale);
            devices.push(DeviceSetup {
                config: config.device.clone(),
                trace,
                designated: (config.designation != Designation::None).then_some(designated),
                trace_scale: scale,
                forced_state: forced,
                model,
            });
        }
        apps.push(AppSetup { spec, devices });
    }
    let blackouts = config
        .overrides
        .radio_blackouts
        .iter()
        .map(|b| {
            let (app, module) = config.resolve_device(&b.device).expect("validated");
            Blackout {
                app,
                module,
                start: SimTime::from_secs_f64(b.start_s),
                end: SimTime::from_secs_f64(b.end_s),
            }
        })
        .collect();
    Ok(Scenario {
        name: config.name.clone(),
        seed: config.seed,
        duration: SimTime::from_secs_f64(config.duration_s),
        slot_s: config.slot_s,
        apps,
        aggregator: config.aggregator.clone(),
        propagation_delay: SimTime::from_secs_f64(config.propagation_delay_s),
        blackouts,
        config: config.clone(),
    })
}

fn build_model(
    f: &ForecasterConfig,
    trace_cfg: &TraceConfig,
    seed: u64,
    path: &str,
) -> Result<ForecastModel, ConfigError> {
    match f.kind {
        ForecastKind::Persistence => Ok(ForecastModel::persistence()),
        ForecastKind::Oracle => Ok(ForecastModel::oracle()),
        ForecastKind::Ewma => {
            ForecastModel::ewma(f.ewma_beta, f.window).map_err(|e| ConfigError::new("forecaster", e.to_string()))
        }
        ForecastKind::Lstm => {
            // Trained on an earlier stretch of the same harvesting conditions.
            let history = load_trace(trace_cfg, f.history_s, seed ^ 0xA5A5_A5A5, path)?;
            let cfg = TrainConfig {
                window: f.window,
                seed,
                ..f.train.clone()
            };
            train(&history, &cfg).map_err(|e| ConfigError::new("forecaster.train", e.to_string()))
        }
    }
}

/// Adapts a model fitted on the unscaled trace to a device whose trace is
/// scaled by `scale`. Min-max normalization makes this exact for the LSTM.
fn rescale_model(mut model: ForecastModel, scale: f64) -> ForecastModel {
    if let ModelParams::Lstm { scaler, .. } = &mut model.params {
        if scale > 0.0 {
            scaler.min *= scale;
            scaler.range *= scale;
        }
    }
    model
}
