//! Command-line front end: `run`, `compare`, `forecast` and `codec`.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! failures while running.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::energy::HarvesterTrace;
use crate::forecast::{self, ForecastKind, ForecastModel, TrainConfig};
use crate::metrics::report::{self, OutputFormat, RunRecord, Variant};
use crate::metrics::MetricsError;
use crate::protocol;
use crate::sim::{run_config, ScenarioConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "blis", version, about = "Battery-less IoT aggregation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario with its configured energy strategy and aggregator.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
        #[arg(long)]
        plot: bool,
        /// Also write the event log as `events.log`.
        #[arg(long)]
        log: bool,
    },
    /// Paired-seed comparison of energy strategies and aggregators.
    Compare {
        /// Glob of scenario files, e.g. `configs/*.toml`.
        #[arg(long)]
        configs: String,
        /// Comma-separated seeds and ranges, e.g. `0,1,5..8`.
        #[arg(long, default_value = "0")]
        seeds: String,
        /// Comma-separated variants such as `atem+vsda,central+vsda`; the
        /// first is compared against each of the others.
        #[arg(long)]
        variants: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
        #[arg(long)]
        plot: bool,
    },
    /// Fit a forecaster to a power trace and write its one-step predictions.
    Forecast {
        /// CSV with header `time_s,power_mw`.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "lstm")]
        model: ForecastKind,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Decode a hex-encoded beacon or sensor packet.
    Codec {
        #[arg(long)]
        hex: String,
    },
}

/// Parses `args` (including the program name) and executes the command,
/// writing human-readable output to `stdout`.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = write!(stdout, "{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    execute(cli.command, stdout)
}

pub fn execute(cmd: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, seed, out, format, plot, log } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let variant = Variant::new(cfg.device.strategy, cfg.aggregator.mode);
            let output = run_config(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
            let m = &output.metrics;
            writeln!(
                stdout,
                "{} {variant} seed {}: data_loss {:.4}, delay {:.3} s, availability {:.4}, initial time {:.3} s",
                cfg.name, cfg.seed, m.data_loss, m.mean_packet_delay_s, m.availability, m.available_initial_time_s
            )?;
            let record = RunRecord { scenario: cfg.name.clone(), variant, seed: cfg.seed, metrics: output.metrics };
            let rep = report::assemble(vec![record], &[variant]);
            let mut written = report::emit_outputs(&rep, format, &out, plot)?;
            if log {
                let p = out.join("events.log");
                fs::write(&p, output.log.to_text())?;
                written.push(p);
            }
            list_written(stdout, &written)
        }
        Command::Compare { configs, seeds, variants, out, format, plot } => {
            let paths = expand_glob(&configs)?;
            let cfgs = paths.iter().map(|p| load_config(p)).collect::<Result<Vec<_>, _>>()?;
            let seeds = parse_seeds(&seeds)?;
            let variants = match variants {
                Some(v) => parse_variants(&v)?,
                None => Variant::defaults(),
            };
            let rep = report::compare(&cfgs, &variants, &seeds).map_err(|e| CliError::Config(e.to_string()))?;
            for s in &rep.summaries {
                if s.variant == s.baseline {
                    continue;
                }
                writeln!(
                    stdout,
                    "{} {} vs {} {}: mean {:+.4} (min {:+.4}, max {:+.4})",
                    s.scenario, s.variant, s.baseline, s.metric, s.mean, s.min, s.max
                )?;
            }
            let written = report::emit_outputs(&rep, format, &out, plot)?;
            list_written(stdout, &written)
        }
        Command::Forecast { trace, model, out, seed, epochs } => {
            let tr = HarvesterTrace::load_csv(&trace).map_err(|e| CliError::Config(format!("{}: {e}", trace.display())))?;
            let fitted = match model {
                ForecastKind::Lstm => {
                    let mut tc = TrainConfig { seed, ..TrainConfig::default() };
                    if let Some(e) = epochs {
                        tc.epochs = e;
                    }
                    forecast::train(&tr, &tc).map_err(|e| CliError::Runtime(e.to_string()))?
                }
                ForecastKind::Ewma => ForecastModel::ewma(0.5, forecast::MAX_WINDOW).map_err(|e| CliError::Config(e.to_string()))?,
                ForecastKind::Persistence => ForecastModel::persistence(),
                ForecastKind::Oracle => ForecastModel::oracle(),
            };
            fs::create_dir_all(&out)?;
            let mut written = Vec::new();
            if model == ForecastKind::Lstm {
                let mut loss = String::from("epoch,train_loss,validation_loss\n");
                loss.push_str(&format!("0,{},{}\n", fitted.history.initial, fitted.history.initial));
                for (i, (t, v)) in fitted.history.train.iter().zip(&fitted.history.validation).enumerate() {
                    loss.push_str(&format!("{},{t},{v}\n", i + 1));
                }
                let p = out.join("loss.csv");
                fs::write(&p, loss)?;
                written.push(p);
            }
            let samples = tr.samples();
            let powers = tr.powers();
            let w = fitted.window;
            let mut pred = String::from("t,actual_mw,predicted_mw\n");
            for i in w..powers.len() {
                // The oracle knows the next sample exactly.
                let p = if model == ForecastKind::Oracle {
                    powers[i]
                } else {
                    forecast::predict(&fitted, &powers[i - w..i]).map_err(|e| CliError::Runtime(e.to_string()))?
                };
                pred.push_str(&format!("{},{},{}\n", samples[i].time_s, powers[i], p));
            }
            let p = out.join("predictions.csv");
            fs::write(&p, pred)?;
            written.push(p);
            let rmse = if model == ForecastKind::Oracle { 0.0 } else { forecast::one_step_rmse(&fitted, &tr) };
            writeln!(stdout, "{model}: one-step RMSE {rmse:.5} mW over {} samples", powers.len())?;
            list_written(stdout, &written)
        }
        Command::Codec { hex } => {
            let cleaned: String = hex.chars().filter(|c| !c.is_whitespace()).collect();
            let bytes = hex::decode(cleaned.trim_start_matches("0x")).map_err(|e| CliError::Usage(format!("bad hex: {e}")))?;
            let text = protocol::describe_packet(&bytes).map_err(|e| CliError::Runtime(e.to_string()))?;
            write!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn list_written(stdout: &mut dyn Write, paths: &[PathBuf]) -> Result<(), CliError> {
    for p in paths {
        writeln!(stdout, "wrote {}", p.display())?;
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    ScenarioConfig::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| CliError::Usage(format!("bad glob `{pattern}`: {e}")))?
        .filter_map(Result::ok)
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("no config files match `{pattern}`")));
    }
    Ok(paths)
}

/// Parses `0,3,5..8` (half-open ranges) into a seed list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = |p: &str| CliError::Usage(format!("bad seed `{p}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|_| bad(part))?;
            let b: u64 = b.parse().map_err(|_| bad(part))?;
            if b <= a {
                return Err(bad(part));
            }
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no seeds given".into()));
    }
    Ok(out)
}

/// Parses `atem+vsda,fh+vsda`.
pub fn parse_variants(s: &str) -> Result<Vec<Variant>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (e, m) = p
                .split_once('+')
                .ok_or_else(|| CliError::Usage(format!("variant `{p}` must look like atem+vsda")))?;
            let energy = serde_plain(e).ok_or_else(|| CliError::Usage(format!("unknown energy strategy `{e}`")))?;
            let mode = serde_plain(m).ok_or_else(|| CliError::Usage(format!("unknown aggregator mode `{m}`")))?;
            Ok(Variant::new(energy, mode))
        })
        .collect()
}

fn serde_plain<T: serde::de::DeserializeOwned>(s: &str) -> Option<T> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).ok()
}
