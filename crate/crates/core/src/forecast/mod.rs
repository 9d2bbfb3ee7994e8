//! Harvester-power forecasting on the aggregator side and the device-state
//! estimate built on it.

pub mod lstm;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{select_device_state, DeviceState};
use crate::energy::{EnergyBuffer, HarvesterTrace};
use lstm::{Adam, Lstm};

pub const MAX_WINDOW: usize = 10;
pub const DEFAULT_ALPHA_HORIZON: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("history has {got} samples, model window is {window}")]
    WrongWindow { window: usize, got: usize },
    #[error("invalid forecaster config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastKind {
    Lstm,
    Persistence,
    Ewma,
    /// True future mean power; the α = 1 harness.
    Oracle,
}

impl fmt::Display for ForecastKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForecastKind::Lstm => "lstm",
            ForecastKind::Persistence => "persistence",
            ForecastKind::Ewma => "ewma",
            ForecastKind::Oracle => "oracle",
        })
    }
}

impl std::str::FromStr for ForecastKind {
    type Err = ForecastError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lstm" => Ok(ForecastKind::Lstm),
            "persistence" => Ok(ForecastKind::Persistence),
            "ewma" => Ok(ForecastKind::Ewma),
            "oracle" => Ok(ForecastKind::Oracle),
            other => Err(ForecastError::InvalidConfig(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub window: usize,
    pub hidden_size: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of windows used for training; the rest validate.
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 400,
            window: MAX_WINDOW,
            hidden_size: 32,
            batch_size: 32,
            seed: 0,
            train_fraction: 0.8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidConfig(m.into()));
        if self.window == 0 || self.window > MAX_WINDOW {
            return bad("window must lie in 1..=10");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.hidden_size == 0 || self.batch_size == 0 {
            return bad("hidden_size and batch_size must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad("train_fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Min-max scaling fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: f64,
    pub range: f64,
}

impl Scaler {
    pub fn fit(xs: &[f64]) -> Self {
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        Self {
            min,
            // A flat series maps to zero instead of dividing by zero.
            range: if range > 1e-12 { range } else { 1.0 },
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / self.range
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * self.range + self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Lstm { net: Lstm, scaler: Scaler },
    Ewma { beta: f64 },
    Persistence,
    Oracle,
}

/// Per-epoch losses in normalized units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub initial: f64,
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub kind: ForecastKind,
    pub window: usize,
    pub params: ModelParams,
    pub seed: u64,
    pub history: LossHistory,
}

impl ForecastModel {
    pub fn persistence() -> Self {
        Self {
            kind: ForecastKind::Persistence,
            window: 1,
            params: ModelParams::Persistence,
            seed: 0,
            history: LossHistory::default(),
        }
    }

    pub fn ewma(beta: f64, window: usize) -> Result<Self, ForecastError> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(ForecastError::InvalidConfig("EWMA beta must lie in (0, 1]".into()));
        }
        if window == 0 || window > MAX_WINDOW {
            return Err(ForecastError::InvalidConfig("window must lie in 1..=10".into()));
        }
        Ok(Self {
            kind: ForecastKind::Ewma,
            window,
            params: ModelParams::Ewma { beta },
            seed: 0,
            history: LossHistory::default(),
        })
    }

    pub fn oracle() -> Self {
        Self {
            kind: ForecastKind::Oracle,
            window: 1,
            params: ModelParams::Oracle,
            seed: 0,
            history: LossHistory::default(),
        }
    }
}

fn windows(series: &[f64], window: usize) -> (Vec<&[f64]>, Vec<f64>) {
    let n = series.len().saturating_sub(window);
    let inputs = (0..n).map(|i| &series[i..i + window]).collect();
    let targets = (0..n).map(|i| series[i + window]).collect();
    (inputs, targets)
}

fn mse(net: &Lstm, inputs: &[&[f64]], targets: &[f64]) -> f64 {
    if inputs.is_empty() {
        return 0.0;
    }
    inputs
        .iter()
        .zip(targets)
        .map(|(x, t)| (net.forward(x) - t).powi(2))
        .sum::<f64>()
        / inputs.len() as f64
}

/// Trains an LSTM on a trace to predict the next sample from the previous
/// `window`. Deterministic for a fixed seed.
pub fn train(trace: &HarvesterTrace, config: &TrainConfig) -> Result<ForecastModel, ForecastError> {
    config.validate()?;
    let powers = trace.powers();
    let needed = 10 * config.window;
    if powers.len() < needed {
        return Err(ForecastError::InsufficientData {
            needed,
            got: powers.len(),
        });
    }
    let split = ((powers.len() as f64 * config.train_fraction).round() as usize).clamp(config.window + 1, powers.len());
    let scaler = Scaler::fit(&powers[..split]);
    let norm: Vec<f64> = powers.iter().map(|&p| scaler.apply(p)).collect();
    let (train_x, train_y) = windows(&norm[..split], config.window);
    // Validation windows may look back into the training split.
    let (val_x, val_y) = if split < norm.len() {
        windows(&norm[split - config.window..], config.window)
    } else {
        (Vec::new(), Vec::new())
    };

    let mean_target = train_y.iter().sum::<f64>() / train_y.len() as f64;
    let mut net = Lstm::new(config.hidden_size, mean_target, config.seed);
    let mut opt = Adam::new(config.hidden_size, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut history = LossHistory {
        initial: mse(&net, &train_x, &train_y),
        ..Default::default()
    };

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train_x[i]).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| train_y[i]).collect();
            let (loss, grads) = net.batch_grad(&xs, &ys);
            if !loss.is_finite() {
                return Err(ForecastError::Divergence { epoch });
            }
            total += loss * batch.len() as f64;
            opt.step(&mut net, grads, 5.0);
        }
        let epoch_loss = total / train_x.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(ForecastError::Divergence { epoch });
        }
        history.train.push(epoch_loss);
        if !val_x.is_empty() {
            history.validation.push(mse(&net, &val_x, &val_y));
        }
    }

    Ok(ForecastModel {
        kind: ForecastKind::Lstm,
        window: config.window,
        params: ModelParams::Lstm { net, scaler },
        seed: config.seed,
        history,
    })
}

/// One-step prediction from the last `window` samples, clamped at zero.
pub fn predict(model: &ForecastModel, history: &[f64]) -> Result<f64, ForecastError> {
    if history.len() != model.window {
        return Err(ForecastError::WrongWindow {
            window: model.window,
            got: history.len(),
        });
    }
    let p = match &model.params {
        ModelParams::Persistence | ModelParams::Oracle => history[history.len() - 1],
        ModelParams::Ewma { beta } => history[1..].iter().fold(history[0], |s, &x| beta * x + (1.0 - beta) * s),
        ModelParams::Lstm { net, scaler } => {
            let xs: Vec<f64> = history.iter().map(|&p| scaler.apply(p)).collect();
            scaler.invert(net.forward(&xs))
        }
    };
    Ok(if p.is_finite() { p.max(0.0) } else { 0.0 })
}

/// Forecast of the mean power over `[t, t + horizon)` as seen from time `t`.
/// Learned models see only samples up to `t`; the oracle reads the future.
pub fn forecast_interval(model: &ForecastModel, trace: &HarvesterTrace, t: f64, horizon: f64) -> f64 {
    match model.kind {
        ForecastKind::Oracle => trace.mean_power_over(t, horizon),
        _ => {
            let hist = trace.history(t, model.window);
            predict(model, &hist).unwrap_or(0.0)
        }
    }
}

/// Inputs for rolling a predicted power through the energy model.
#[derive(Debug, Clone, PartialEq)]
pub struct StateParams {
    /// Lumped buffer holding the last known energy.
    pub buffer: EnergyBuffer,
    pub threshold_j: f64,
    pub interval_s: f64,
    pub slot_s: f64,
}

/// Rolls the predicted power through the buffer for one beacon interval and
/// applies the state threshold to the resulting usable energy.
pub fn estimate_state(predicted_power_mw: f64, params: &StateParams) -> DeviceState {
    let slots = (params.interval_s / params.slot_s).round().max(0.0) as u64;
    let e = params.buffer.energy_after(predicted_power_mw, params.slot_s, slots);
    let usable = (e - params.buffer.floor_energy_j()).max(0.0);
    select_device_state(usable, params.threshold_j)
}

/// Fraction of correct predictions over the last `DEFAULT_ALPHA_HORIZON` entries.
pub fn update_alpha(log: &[(DeviceState, DeviceState)]) -> f64 {
    update_alpha_over(log, DEFAULT_ALPHA_HORIZON)
}

pub fn update_alpha_over(log: &[(DeviceState, DeviceState)], horizon: usize) -> f64 {
    let recent = &log[log.len().saturating_sub(horizon.max(1))..];
    if recent.is_empty() {
        return 1.0;
    }
    recent.iter().filter(|(p, a)| p == a).count() as f64 / recent.len() as f64
}

/// Root-mean-square one-step error of `model` over every full window of the trace.
pub fn one_step_rmse(model: &ForecastModel, trace: &HarvesterTrace) -> f64 {
    let p = trace.powers();
    let w = model.window;
    if p.len() <= w {
        return 0.0;
    }
    let sq: f64 = (w..p.len())
        .map(|i| (predict(model, &p[i - w..i]).unwrap_or(0.0) - p[i]).powi(2))
        .sum();
    (sq / (p.len() - w) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            hidden_size: 8,
            ..Default::default()
        }
    }

    #[test]
    fn persistence_and_ewma() {
        let p = ForecastModel::persistence();
        assert_eq!(predict(&p, &[4.2]).unwrap(), 4.2);
        let e = ForecastModel::ewma(0.5, 2).unwrap();
        assert_eq!(predict(&e, &[2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(predict(&e, &[2.0]), Err(ForecastError::WrongWindow { window: 2, got: 1 }));
    }

    #[test]
    fn constant_trace_is_exact() {
        let trace = HarvesterTrace::constant(5.0, 1.0, 200.0).unwrap();
        let model = train(&trace, &quick()).unwrap();
        assert!(one_step_rmse(&model, &trace) < 0.01);
        assert!((predict(&model, &[5.0; 10]).unwrap() - 5.0).abs() < 0.05);
    }

    #[test]
    fn short_trace_rejected() {
        let trace = HarvesterTrace::constant(5.0, 1.0, 50.0).unwrap();
        assert!(matches!(train(&trace, &quick()), Err(ForecastError::InsufficientData { .. })));
    }

    #[test]
    fn training_is_deterministic() {
        let powers: Vec<f64> = (0..150).map(|i| 3.0 + (i as f64 * 0.2).sin()).collect();
        let trace = HarvesterTrace::uniform(0.0, 1.0, &powers).unwrap();
        let a = train(&trace, &quick()).unwrap();
        let b = train(&trace, &quick()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn state_estimate_examples() {
        let buf = EnergyBuffer::new(267e-6, 10e3, 0.9, 0.01).unwrap().with_cutoff(1.8);
        let floor = buf.floor_energy_j();
        let params = StateParams {
            buffer: buf.clone().with_energy(floor),
            threshold_j: 359.776e-6,
            interval_s: 180.0,
            slot_s: 0.01,
        };
        assert_eq!(estimate_state(0.0, &params), DeviceState::LowPower);
        assert_eq!(estimate_state(5.0, &params), DeviceState::Normal);
        let boundary = StateParams {
            buffer: buf.with_energy(floor + 359.776e-6),
            interval_s: 0.0,
            ..params
        };
        assert_eq!(estimate_state(0.0, &boundary), DeviceState::LowPower);
    }

    #[test]
    fn alpha_examples() {
        use DeviceState::*;
        assert_eq!(update_alpha(&[(Normal, Normal), (LowPower, LowPower)]), 1.0);
        assert_eq!(update_alpha(&[(Normal, Normal), (LowPower, Normal)]), 0.5);
        let mut log = vec![(Normal, LowPower); 50];
        log.extend(vec![(Normal, Normal); 100]);
        assert_eq!(update_alpha(&log), 1.0);
    }
}
