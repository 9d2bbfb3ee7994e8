//! Paired-seed comparison sweeps and their CSV/JSON/SVG outputs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::EnergyStrategy;
use crate::sim::{run_config, ConfigError, ScenarioConfig};
use crate::vsda::AggregatorMode;

use super::{plot, MetricsBundle, MetricsError};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 18] = [
    "schema_version",
    "scenario",
    "energy_strategy",
    "aggregator_mode",
    "seed",
    "data_loss",
    "mean_packet_delay_s",
    "mean_generation_delay_s",
    "availability",
    "available_initial_time_s",
    "never_available",
    "solicitations",
    "received",
    "lost",
    "achieved_per_period",
    "target_nml_per_period",
    "overhead_ratio",
    "duration_s",
];

/// One energy strategy paired with one aggregator mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variant {
    pub energy: EnergyStrategy,
    pub mode: AggregatorMode,
}

impl Variant {
    pub const fn new(energy: EnergyStrategy, mode: AggregatorMode) -> Self {
        Self { energy, mode }
    }

    /// The proposed system and the baselines it is measured against.
    pub fn defaults() -> Vec<Variant> {
        use AggregatorMode::*;
        use EnergyStrategy::*;
        vec![
            Variant::new(Atem, Vsda),
            Variant::new(Fh, Vsda),
            Variant::new(Central, Vsda),
            Variant::new(Atem, Polling),
        ]
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.energy, self.mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub variant: Variant,
    pub seed: u64,
    pub metrics: MetricsBundle,
}

/// Relative change of `variant` against `baseline` on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub scenario: String,
    pub variant: Variant,
    pub baseline: Variant,
    pub seed: u64,
    /// (A_v − A_b) / A_b, percent.
    pub availability_gain_pct: f64,
    /// I_b − I_v, seconds; positive when the variant is available sooner.
    pub initial_time_sooner_s: f64,
    /// (L_b − L_v) / L_b, percent.
    pub data_loss_reduction_pct: f64,
    /// (D_b − D_v) / D_b, percent.
    pub delay_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub variant: Variant,
    pub baseline: Variant,
    pub metric: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Headline improvements targeted by the design; carried along
/// for comparison, never asserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTargets {
    pub availability_gain_pct: f64,
    pub initial_time_sooner_s: f64,
    pub data_loss_reduction_pct: f64,
    pub delay_reduction_pct: f64,
}

impl Default for ReferenceTargets {
    fn default() -> Self {
        Self {
            availability_gain_pct: 15.28,
            initial_time_sooner_s: 22.4,
            data_loss_reduction_pct: 99.04,
            delay_reduction_pct: 94.96,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub runs: Vec<RunRecord>,
    pub deltas: Vec<Delta>,
    pub summaries: Vec<Summary>,
    pub reference: ReferenceTargets,
}

type DeltaField = (&'static str, fn(&Delta) -> f64);

fn pct_change(base: f64, new: f64) -> f64 {
    if base.abs() < 1e-15 {
        0.0
    } else {
        (new - base) / base * 100.0
    }
}

pub fn delta(scenario: &str, seed: u64, v: (&Variant, &MetricsBundle), b: (&Variant, &MetricsBundle)) -> Delta {
    let (vm, bm) = (v.1, b.1);
    Delta {
        scenario: scenario.to_string(),
        variant: *v.0,
        baseline: *b.0,
        seed,
        availability_gain_pct: pct_change(bm.availability, vm.availability),
        initial_time_sooner_s: bm.available_initial_time_s - vm.available_initial_time_s,
        data_loss_reduction_pct: -pct_change(bm.data_loss, vm.data_loss),
        delay_reduction_pct: -pct_change(bm.mean_packet_delay_s, vm.mean_packet_delay_s),
    }
}

/// Thread pool honoring `BLIS_SIM_THREADS`.
fn pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("BLIS_SIM_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool")
}

/// Runs every (scenario, variant, seed) and reports deltas of the first
/// variant against each of the others on matching seeds.
pub fn compare(configs: &[ScenarioConfig], variants: &[Variant], seeds: &[u64]) -> Result<ComparisonReport, ConfigError> {
    let jobs: Vec<(usize, Variant, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| variants.iter().flat_map(move |&v| seeds.iter().map(move |&s| (ci, v, s))))
        .collect();
    let results: Vec<Result<RunRecord, ConfigError>> = pool().install(|| {
        jobs.par_iter()
            .map(|&(ci, v, seed)| {
                let cfg = configs[ci].clone().with_strategy(v.energy).with_mode(v.mode).with_seed(seed);
                let out = run_config(&cfg)?;
                Ok(RunRecord {
                    scenario: cfg.name.clone(),
                    variant: v,
                    seed,
                    metrics: out.metrics,
                })
            })
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(runs, variants))
}

/// Builds deltas and summaries from finished runs. Deltas only ever pair
/// runs of the same scenario and seed.
pub fn assemble(runs: Vec<RunRecord>, variants: &[Variant]) -> ComparisonReport {
    let mut deltas = Vec::new();
    if let Some(proposed) = variants.first() {
        for base in variants {
            for r in runs.iter().filter(|r| r.variant == *proposed) {
                if let Some(b) = runs
                    .iter()
                    .find(|b| b.variant == *base && b.seed == r.seed && b.scenario == r.scenario)
                {
                    deltas.push(delta(&r.scenario, r.seed, (proposed, &r.metrics), (base, &b.metrics)));
                }
            }
        }
    }
    let mut summaries = Vec::new();
    let mut keys: Vec<(String, Variant, Variant)> = Vec::new();
    for d in &deltas {
        let k = (d.scenario.clone(), d.variant, d.baseline);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (scenario, v, b) in keys {
        let group: Vec<&Delta> = deltas
            .iter()
            .filter(|d| d.scenario == scenario && d.variant == v && d.baseline == b)
            .collect();
        let metrics: [DeltaField; 4] = [
            ("availability_gain_pct", |d| d.availability_gain_pct),
            ("initial_time_sooner_s", |d| d.initial_time_sooner_s),
            ("data_loss_reduction_pct", |d| d.data_loss_reduction_pct),
            ("delay_reduction_pct", |d| d.delay_reduction_pct),
        ];
        for (name, f) in metrics {
            let xs: Vec<f64> = group.iter().map(|d| f(d)).collect();
            summaries.push(Summary {
                scenario: scenario.clone(),
                variant: v,
                baseline: b,
                metric: name.to_string(),
                mean: xs.iter().sum::<f64>() / xs.len() as f64,
                min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    ComparisonReport {
        schema_version: SCHEMA_VERSION,
        runs,
        deltas,
        summaries,
        reference: ReferenceTargets::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

pub fn csv_string(report: &ComparisonReport) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| MetricsError::Serialize(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for r in &report.runs {
        let m = &r.metrics;
        let achieved: f64 = m.achieved_rate.iter().map(|a| a.achieved_per_period).sum();
        let target: u32 = m.achieved_rate.iter().map(|a| a.target_nml_per_period).sum();
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.scenario.clone(),
            r.variant.energy.to_string(),
            r.variant.mode.to_string(),
            r.seed.to_string(),
            m.data_loss.to_string(),
            m.mean_packet_delay_s.to_string(),
            m.mean_generation_delay_s.to_string(),
            m.availability.to_string(),
            m.available_initial_time_s.to_string(),
            m.never_available.to_string(),
            m.solicitations.to_string(),
            m.received.to_string(),
            m.lost.to_string(),
            achieved.to_string(),
            target.to_string(),
            m.overhead_ratio.to_string(),
            m.duration_s.to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| MetricsError::Serialize(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn json_string(report: &ComparisonReport) -> Result<String, MetricsError> {
    serde_json::to_string_pretty(report).map_err(|e| MetricsError::Serialize(e.to_string()))
}

/// Writes `report.csv` or `report.json` (and SVG plots when asked) into
/// `out_dir`. Returns the written paths.
pub fn emit_outputs(
    report: &ComparisonReport,
    format: OutputFormat,
    out_dir: &Path,
    plots: bool,
) -> Result<Vec<PathBuf>, MetricsError> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let (name, body) = match format {
        OutputFormat::Csv => ("report.csv", csv_string(report)?),
        OutputFormat::Json => ("report.json", json_string(report)?),
    };
    let path = out_dir.join(name);
    fs::write(&path, body)?;
    written.push(path);
    if plots {
        for (file, svg) in plot::metric_plots(report) {
            let path = out_dir.join(file);
            fs::write(&path, svg)?;
            written.push(path);
        }
    }
    Ok(written)
}
