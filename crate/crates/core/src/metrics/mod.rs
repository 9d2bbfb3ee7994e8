//! Headline metrics computed from an event log, and comparison sweeps.

pub mod plot;
pub mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{is_legal_transition, TaskKind, TaskState};
use crate::sim::log::{EventLog, LogError, LogRecord};

pub use report::{
    compare, emit_outputs, ComparisonReport, Delta, OutputFormat, ReferenceTargets, RunRecord, Summary, Variant,
    CSV_COLUMNS, SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("malformed log record {record}: {reason}")]
    MalformedLog { record: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialize(String),
}

impl From<LogError> for MetricsError {
    fn from(e: LogError) -> Self {
        MetricsError::MalformedLog {
            record: e.record,
            reason: e.reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMetrics {
    pub device: String,
    /// `mcu` (sense buffer vs sense cost) or `radio` (radio buffer vs receive cost).
    pub component: String,
    pub availability: f64,
    /// First instant the component could pay for its task; `None` if never.
    pub initial_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRate {
    pub app_id: u8,
    /// Readings per period if every module stayed NML.
    pub target_nml_per_period: u32,
    /// Readings received in each complete period.
    pub per_period: Vec<u64>,
    /// Mean over complete periods; partial trailing periods are ignored.
    pub achieved_per_period: f64,
    pub final_alpha: f64,
    pub infeasible_periods: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub duration_s: f64,
    pub solicitations: u64,
    pub received: u64,
    pub lost: u64,
    /// Solicitations still pending when the run ended; excluded from loss.
    pub open: u64,
    pub stale: u64,
    pub beacons: u64,
    pub data_loss: f64,
    pub mean_packet_delay_s: f64,
    pub max_packet_delay_s: f64,
    pub mean_generation_delay_s: f64,
    /// Mean over all device components.
    pub availability: f64,
    /// Mean over all device components; never-available ones count as the full duration.
    pub available_initial_time_s: f64,
    pub never_available: u64,
    pub components: Vec<ComponentMetrics>,
    pub achieved_rate: Vec<AppRate>,
    pub task_energy_j: f64,
    pub overhead_energy_j: f64,
    pub overhead_ratio: f64,
    pub audit_max_rel_error: f64,
    pub illegal_transitions: u64,
    pub dependency_violations: u64,
    pub negative_energy_events: u64,
    pub errors: u64,
}

#[derive(Default)]
struct DeviceTrack {
    tasks: BTreeMap<TaskKind, TaskState>,
    sensed: bool,
    heard: bool,
    /// (currently on, since, total on, first on)
    comps: BTreeMap<String, (bool, u64, u64, Option<u64>)>,
}

fn need<T: std::str::FromStr>(r: &LogRecord, n: usize, key: &str) -> Result<T, MetricsError> {
    r.parse_field(key).ok_or_else(|| MetricsError::MalformedLog {
        record: n,
        reason: format!("{} record lacks `{key}`", r.event),
    })
}

fn parse_task(r: &LogRecord, n: usize) -> Result<(TaskKind, TaskState, TaskState), MetricsError> {
    let bad = |k: &str| MetricsError::MalformedLog {
        record: n,
        reason: format!("bad task field `{k}`"),
    };
    let kind = r.field("kind").and_then(TaskKind::parse).ok_or_else(|| bad("kind"))?;
    let from = r.field("from").and_then(TaskState::parse).ok_or_else(|| bad("from"))?;
    let to = r.field("to").and_then(TaskState::parse).ok_or_else(|| bad("to"))?;
    Ok((kind, from, to))
}

/// Parses log text and computes its metrics.
pub fn compute_metrics_from_text(text: &str) -> Result<MetricsBundle, MetricsError> {
    compute_metrics(&EventLog::parse(text)?)
}

/// Computes the headline metrics of one run from its event log.
pub fn compute_metrics(log: &EventLog) -> Result<MetricsBundle, MetricsError> {
    let mut m = MetricsBundle::default();
    let mut end_us = log.records.last().map(|r| r.time.micros()).unwrap_or(0);
    let mut devices: BTreeMap<String, DeviceTrack> = BTreeMap::new();
    let mut apps: BTreeMap<String, (AppRate, u64, BTreeMap<u64, u64>)> = BTreeMap::new();
    let mut delays = Vec::new();
    let mut gen_delays = Vec::new();

    for (i, r) in log.records.iter().enumerate() {
        let n = i + 1;
        let t = r.time.micros();
        match (r.entity.as_str(), r.event.as_str()) {
            ("sim", "start") => end_us = need(r, n, "duration_us")?,
            ("sim", "end") => end_us = need(r, n, "duration_us")?,
            (_, "config") if r.entity.starts_with("agg:") => {
                let app_id: u8 = r.entity[4..].parse().map_err(|_| MetricsError::MalformedLog {
                    record: n,
                    reason: "bad aggregator id".into(),
                })?;
                let modules: u32 = need(r, n, "modules")?;
                let rate: u32 = need(r, n, "rate_nml")?;
                let period: u64 = need(r, n, "period_us")?;
                apps.insert(
                    r.entity.clone(),
                    (
                        AppRate {
                            app_id,
                            target_nml_per_period: modules * rate,
                            per_period: Vec::new(),
                            achieved_per_period: 0.0,
                            final_alpha: 1.0,
                            infeasible_periods: 0,
                        },
                        period.max(1),
                        BTreeMap::new(),
                    ),
                );
            }
            (_, "solicit") => m.solicitations += 1,
            (_, "solicit_lost") => m.lost += 1,
            (_, "solicit_open") => m.open += 1,
            (_, "stale") => m.stale += 1,
            (_, "beacon_tx") => m.beacons += 1,
            (_, "error") => m.errors += 1,
            (_, "energy_negative") => m.negative_energy_events += 1,
            (_, "tau") => {
                if let Some(a) = apps.get_mut(&r.entity) {
                    a.0.final_alpha = need(r, n, "alpha")?;
                    if r.field("infeasible") == Some("1") {
                        a.0.infeasible_periods += 1;
                    }
                }
            }
            (_, "sensor_rx") => {
                m.received += 1;
                delays.push(need::<u64>(r, n, "delay_us")? as f64 * 1e-6);
                gen_delays.push(need::<u64>(r, n, "gen_delay_us")? as f64 * 1e-6);
                if let Some(a) = apps.get_mut(&r.entity) {
                    *a.2.entry(t / a.1).or_default() += 1;
                }
            }
            (_, "avail") => {
                let comp: String = need(r, n, "component")?;
                let on = r.field("on") == Some("1");
                let d = devices.entry(r.entity.clone()).or_default();
                let c = d.comps.entry(comp).or_insert((false, t, 0, None));
                if on && !c.0 {
                    c.0 = true;
                    c.1 = t;
                    c.3.get_or_insert(t);
                } else if !on && c.0 {
                    c.0 = false;
                    c.2 += t - c.1;
                }
            }
            (_, "task") => {
                let (kind, from, to) = parse_task(r, n)?;
                let d = devices.entry(r.entity.clone()).or_default();
                let cur = d.tasks.entry(kind).or_insert(TaskState::Suspended);
                if *cur != from || !is_legal_transition(from, to) {
                    m.illegal_transitions += 1;
                }
                *cur = to;
                if kind == TaskKind::Sense && from == TaskState::Running {
                    d.sensed = true;
                }
            }
            (_, "heard") => devices.entry(r.entity.clone()).or_default().heard = true,
            (_, "exec") => {
                let kind = r
                    .field("kind")
                    .and_then(TaskKind::parse)
                    .ok_or_else(|| MetricsError::MalformedLog {
                        record: n,
                        reason: "bad exec kind".into(),
                    })?;
                let d = devices.entry(r.entity.clone()).or_default();
                match kind {
                    TaskKind::Sense if !d.heard => m.dependency_violations += 1,
                    TaskKind::Transmit if !d.sensed => m.dependency_violations += 1,
                    TaskKind::Transmit => {
                        d.sensed = false;
                        d.heard = false;
                    }
                    _ => {}
                }
            }
            (_, "audit") => {
                let g = |k: &str| need::<f64>(r, n, k);
                let expected = g("initial_j")? + g("harvested_j")? - g("leaked_j")? - g("overflow_j")? - g("task_j")?
                    - g("overhead_j")?;
                let stored = g("stored_j")?;
                let scale = g("harvested_j")?.max(g("initial_j")?).max(1e-12);
                m.audit_max_rel_error = m.audit_max_rel_error.max((stored - expected).abs() / scale);
                m.task_energy_j += g("task_j")?;
                m.overhead_energy_j += g("overhead_j")?;
            }
            _ => {}
        }
    }

    m.duration_s = end_us as f64 * 1e-6;
    let settled = m.solicitations.saturating_sub(m.open);
    m.data_loss = if settled > 0 { m.lost as f64 / settled as f64 } else { 0.0 };
    if !delays.is_empty() {
        m.mean_packet_delay_s = delays.iter().sum::<f64>() / delays.len() as f64;
        m.max_packet_delay_s = delays.iter().copied().fold(0.0, f64::max);
        m.mean_generation_delay_s = gen_delays.iter().sum::<f64>() / gen_delays.len() as f64;
    }
    m.overhead_ratio = if m.task_energy_j > 0.0 {
        m.overhead_energy_j / m.task_energy_j
    } else {
        0.0
    };

    for (name, d) in &devices {
        for (comp, &(on, since, total, first)) in &d.comps {
            let total = total + if on { end_us.saturating_sub(since) } else { 0 };
            let availability = if end_us > 0 { total as f64 / end_us as f64 } else { 0.0 };
            m.components.push(ComponentMetrics {
                device: name.clone(),
                component: comp.clone(),
                availability,
                initial_time_s: first.map(|f| f as f64 * 1e-6),
            });
        }
    }
    if !m.components.is_empty() {
        let k = m.components.len() as f64;
        m.availability = m.components.iter().map(|c| c.availability).sum::<f64>() / k;
        m.available_initial_time_s =
            m.components.iter().map(|c| c.initial_time_s.unwrap_or(m.duration_s)).sum::<f64>() / k;
        m.never_available = m.components.iter().filter(|c| c.initial_time_s.is_none()).count() as u64;
    }

    for (_, (mut rate, period, counts)) in apps {
        let complete = end_us / period;
        rate.per_period = (0..complete).map(|p| counts.get(&p).copied().unwrap_or(0)).collect();
        rate.achieved_per_period = if complete > 0 {
            rate.per_period.iter().sum::<u64>() as f64 / complete as f64
        } else {
            0.0
        };
        m.achieved_rate.push(rate);
    }
    Ok(m)
}
