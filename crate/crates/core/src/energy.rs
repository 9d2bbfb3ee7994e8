//! Harvester traces, capacitor buffers and the federated split of harvested power.
//!
//! Units: power is carried in milliwatts at the API surface, energy in joules,
//! time in seconds. The slotted update in [`buffer_step`] is the simulation's
//! energy ground truth; [`capacitor_voltage`] is the continuous RC charging
//! curve and is exposed for analysis.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Radicands below this are treated as a genuine error rather than rounding.
const RADICAND_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("non-finite input for `{0}`")]
    NonFiniteInput(&'static str),
    #[error("negative radicand {0:e} in capacitor voltage")]
    NegativeRadicand(f64),
    #[error("time {t} s is outside the trace range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("invalid value {value} for `{name}`")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("trace line {line}: {msg}")]
    TraceParse { line: u64, msg: String },
    #[error("insufficient energy: need {needed_j:e} J, usable {usable_j:e} J")]
    InsufficientEnergy { needed_j: f64, usable_j: f64 },
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
}

fn finite(name: &'static str, v: f64) -> Result<f64, EnergyError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EnergyError::NonFiniteInput(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub time_s: f64,
    pub power_mw: f64,
}

/// Uniformly sampled ambient power, held constant between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvesterTrace {
    samples: Vec<TraceSample>,
    sample_interval: f64,
}

impl HarvesterTrace {
    /// Builds a trace from explicit samples. At least two samples are needed
    /// to infer the sample interval; use [`HarvesterTrace::uniform`] otherwise.
    pub fn new(samples: Vec<TraceSample>) -> Result<Self, EnergyError> {
        if samples.len() < 2 {
            return Err(EnergyError::InvalidTrace(
                "at least two samples are required to infer the interval".into(),
            ));
        }
        let interval = samples[1].time_s - samples[0].time_s;
        let trace = Self {
            samples,
            sample_interval: interval,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn uniform(start_s: f64, interval_s: f64, powers_mw: &[f64]) -> Result<Self, EnergyError> {
        if powers_mw.is_empty() {
            return Err(EnergyError::InvalidTrace("empty trace".into()));
        }
        let samples = powers_mw
            .iter()
            .enumerate()
            .map(|(k, &p)| TraceSample {
                time_s: start_s + k as f64 * interval_s,
                power_mw: p,
            })
            .collect();
        let trace = Self {
            samples,
            sample_interval: interval_s,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn constant(power_mw: f64, interval_s: f64, duration_s: f64) -> Result<Self, EnergyError> {
        let n = (duration_s / interval_s).round() as usize + 1;
        Self::uniform(0.0, interval_s, &vec![power_mw; n])
    }

    fn validate(&self) -> Result<(), EnergyError> {
        let dt = self.sample_interval;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(EnergyError::InvalidTrace(format!("sample interval {dt} must be positive")));
        }
        let t0 = self.samples[0].time_s;
        for (k, s) in self.samples.iter().enumerate() {
            finite("time_s", s.time_s)?;
            finite("power_mw", s.power_mw)?;
            if s.power_mw < 0.0 {
                return Err(EnergyError::InvalidTrace(format!(
                    "sample {k} has negative power {}",
                    s.power_mw
                )));
            }
            let expected = t0 + k as f64 * dt;
            if (s.time_s - expected).abs() > 1e-6 * dt.max(1.0) {
                return Err(EnergyError::InvalidTrace(format!(
                    "sample {k} at {} s breaks uniform spacing of {dt} s",
                    s.time_s
                )));
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn sample_interval(&self) -> f64 {
        self.sample_interval
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].time_s
    }

    /// Timestamp of the last sample.
    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].time_s
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.power_mw).collect()
    }

    pub fn max_power(&self) -> f64 {
        self.samples.iter().map(|s| s.power_mw).fold(0.0, f64::max)
    }

    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.power_mw).sum::<f64>() / self.samples.len() as f64
    }

    fn index_at(&self, t: f64) -> usize {
        let k = ((t - self.start_time()) / self.sample_interval + 1e-9).floor();
        (k.max(0.0) as usize).min(self.samples.len() - 1)
    }

    /// Zero-order hold: the most recent sample at or before `t`.
    pub fn power_at(&self, t: f64) -> Result<f64, EnergyError> {
        finite("t", t)?;
        let (start, end) = (self.start_time(), self.end_time());
        if t < start - 1e-12 || t > end + 1e-12 {
            return Err(EnergyError::OutOfRange { t, start, end });
        }
        Ok(self.samples[self.index_at(t)].power_mw)
    }

    /// The last `n` sample powers observed at or before `t`, oldest first.
    /// Short histories are left-padded with the earliest sample.
    pub fn history(&self, t: f64, n: usize) -> Vec<f64> {
        let last = self.index_at(t.max(self.start_time()));
        let first = (last + 1).saturating_sub(n);
        let mut out: Vec<f64> = self.samples[first..=last].iter().map(|s| s.power_mw).collect();
        while out.len() < n {
            out.insert(0, out[0]);
        }
        out
    }

    /// Time-average of the held power over `[t, t + horizon]`, clipped to the trace.
    pub fn mean_power_over(&self, t: f64, horizon: f64) -> f64 {
        let end = (t + horizon).min(self.end_time());
        if end <= t {
            return self.samples[self.index_at(t)].power_mw;
        }
        let dt = self.sample_interval;
        let mut acc = 0.0;
        let mut cur = t;
        while cur < end - 1e-12 {
            let k = self.index_at(cur);
            let boundary = (self.start_time() + (k + 1) as f64 * dt).min(end);
            let step = (boundary - cur).max(1e-12);
            acc += self.samples[k].power_mw * step;
            cur += step;
        }
        acc / (end - t)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| TraceSample {
                    time_s: s.time_s,
                    power_mw: s.power_mw * factor,
                })
                .collect(),
            sample_interval: self.sample_interval,
        }
    }

    /// Parses `time_s,power_mw` CSV. Errors carry the 1-based line number.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, EnergyError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| EnergyError::TraceParse { line: 1, msg: e.to_string() })?
            .clone();
        let expected = ["time_s", "power_mw"];
        if headers.len() != 2 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(EnergyError::TraceParse {
                line: 1,
                msg: format!("expected header `time_s,power_mw`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| EnergyError::TraceParse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                msg: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let field = |i: usize, name: &str| -> Result<f64, EnergyError> {
                let raw = rec.get(i).unwrap_or("").trim();
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| EnergyError::TraceParse {
                        line,
                        msg: format!("bad {name} `{raw}`"),
                    })
            };
            let time_s = field(0, "time_s")?;
            let power_mw = field(1, "power_mw")?;
            if power_mw < 0.0 {
                return Err(EnergyError::TraceParse {
                    line,
                    msg: format!("negative power {power_mw}"),
                });
            }
            if let Some(prev) = samples.last().map(|s: &TraceSample| s.time_s) {
                if time_s <= prev {
                    return Err(EnergyError::TraceParse {
                        line,
                        msg: format!("time {time_s} is not after {prev}"),
                    });
                }
            }
            samples.push(TraceSample { time_s, power_mw });
        }
        if samples.len() == 1 {
            return Err(EnergyError::InvalidTrace("a single-sample file has no interval".into()));
        }
        Self::new(samples)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, EnergyError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("time_s,power_mw\n");
        for s in &self.samples {
            out.push_str(&format!("{},{}\n", s.time_s, s.power_mw));
        }
        out
    }
}

/// One capacitor of the (possibly federated) store.
///
/// `energy_j` is the stored energy; `voltage()` is derived as sqrt(2E/c).
/// Energy below the cutoff voltage cannot power the load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBuffer {
    pub capacitance_f: f64,
    pub parallel_resistance_ohm: f64,
    pub efficiency: f64,
    /// Fraction of stored energy lost per slot.
    pub leakage_fraction: f64,
    pub cutoff_voltage: f64,
    /// Harvest power at which the capacitor saturates (steady state of the
    /// RC charging curve). Infinite means no ceiling.
    pub saturation_power_mw: f64,
    pub energy_j: f64,
}

/// Energy accounting for one slot of [`EnergyBuffer::step`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepOutcome {
    /// η·P·t actually offered to the capacitor.
    pub harvested_j: f64,
    pub leaked_j: f64,
    /// Energy above the saturation ceiling, discarded.
    pub overflow_j: f64,
}

impl EnergyBuffer {
    pub fn new(
        capacitance_f: f64,
        parallel_resistance_ohm: f64,
        efficiency: f64,
        leakage_fraction: f64,
    ) -> Result<Self, EnergyError> {
        let c = finite("capacitance_f", capacitance_f)?;
        let r = finite("parallel_resistance_ohm", parallel_resistance_ohm)?;
        let eta = finite("efficiency", efficiency)?;
        let sigma = finite("leakage_fraction", leakage_fraction)?;
        if c <= 0.0 {
            return Err(EnergyError::InvalidParameter { name: "capacitance_f", value: c });
        }
        if r <= 0.0 {
            return Err(EnergyError::InvalidParameter { name: "parallel_resistance_ohm", value: r });
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(EnergyError::InvalidParameter { name: "efficiency", value: eta });
        }
        if !(0.0..1.0).contains(&sigma) {
            return Err(EnergyError::InvalidParameter { name: "leakage_fraction", value: sigma });
        }
        Ok(Self {
            capacitance_f: c,
            parallel_resistance_ohm: r,
            efficiency: eta,
            leakage_fraction: sigma,
            cutoff_voltage: 0.0,
            saturation_power_mw: f64::INFINITY,
            energy_j: 0.0,
        })
    }

    pub fn with_energy(mut self, energy_j: f64) -> Self {
        self.energy_j = energy_j.max(0.0);
        self
    }

    pub fn with_voltage(mut self, volts: f64) -> Self {
        self.energy_j = 0.5 * self.capacitance_f * volts * volts;
        self
    }

    pub fn with_cutoff(mut self, volts: f64) -> Self {
        self.cutoff_voltage = volts.max(0.0);
        self
    }

    pub fn with_saturation(mut self, power_mw: f64) -> Self {
        self.saturation_power_mw = power_mw.max(0.0);
        self
    }

    pub fn voltage(&self) -> f64 {
        (2.0 * self.energy_j / self.capacitance_f).sqrt()
    }

    /// ½·c·(P_sat·r_p): the RC steady state at the saturation power.
    pub fn max_energy_j(&self) -> f64 {
        if self.saturation_power_mw.is_infinite() {
            return f64::INFINITY;
        }
        0.5 * self.capacitance_f * self.saturation_power_mw * 1e-3 * self.parallel_resistance_ohm
    }

    pub fn floor_energy_j(&self) -> f64 {
        0.5 * self.capacitance_f * self.cutoff_voltage * self.cutoff_voltage
    }

    /// Energy above the cutoff, available to tasks.
    pub fn usable_energy_j(&self) -> f64 {
        (self.energy_j - self.floor_energy_j()).max(0.0)
    }

    /// Per-slot leakage equivalent to discharge through `r_p`:
    /// 1 − exp(−2t/(c·r_p)).
    pub fn rc_leakage_fraction(&self, slot_s: f64) -> f64 {
        1.0 - (-2.0 * slot_s / (self.capacitance_f * self.parallel_resistance_ohm)).exp()
    }

    /// Advances one slot in place: E ← (1−σ)·E + η·P·t, then saturates.
    pub fn step(&mut self, harvest_power_mw: f64, slot_s: f64) -> Result<StepOutcome, EnergyError> {
        let p = finite("harvest_power_mw", harvest_power_mw)?;
        let t = finite("slot", slot_s)?;
        if t <= 0.0 {
            return Err(EnergyError::InvalidParameter { name: "slot", value: t });
        }
        if p < 0.0 {
            return Err(EnergyError::InvalidParameter { name: "harvest_power_mw", value: p });
        }
        let leaked = self.leakage_fraction * self.energy_j;
        let harvested = self.efficiency * p * 1e-3 * t;
        let next = self.energy_j - leaked + harvested;
        let cap = self.max_energy_j();
        let overflow = (next - cap).max(0.0);
        self.energy_j = next.min(cap);
        Ok(StepOutcome {
            harvested_j: harvested,
            leaked_j: leaked,
            overflow_j: overflow,
        })
    }

    /// Removes `amount_j` if the usable energy covers it.
    pub fn draw(&mut self, amount_j: f64) -> Result<(), EnergyError> {
        let usable = self.usable_energy_j();
        // Tolerate rounding when the buffer holds exactly the requested amount.
        let slack = 1e-12 * amount_j.abs() + 1e-18;
        if usable + slack < amount_j {
            return Err(EnergyError::InsufficientEnergy {
                needed_j: amount_j,
                usable_j: usable,
            });
        }
        self.energy_j = (self.energy_j - amount_j).max(0.0);
        Ok(())
    }

    /// Energy after `slots` steps at constant power, in closed form.
    /// Equivalent to iterating [`EnergyBuffer::step`] from below the ceiling.
    pub fn energy_after(&self, harvest_power_mw: f64, slot_s: f64, slots: u64) -> f64 {
        let sigma = self.leakage_fraction;
        let gain = self.efficiency * harvest_power_mw.max(0.0) * 1e-3 * slot_s;
        let decay = (1.0 - sigma).powf(slots as f64);
        let e = if sigma > 0.0 {
            decay * self.energy_j + gain * (1.0 - decay) / sigma
        } else {
            self.energy_j + gain * slots as f64
        };
        if slots == 0 {
            self.energy_j
        } else {
            e.min(self.max_energy_j())
        }
    }

    /// Long-run energy at constant power: min(η·P·t/σ, ceiling).
    pub fn steady_state_energy_j(&self, harvest_power_mw: f64, slot_s: f64) -> f64 {
        if self.leakage_fraction <= 0.0 {
            return self.max_energy_j();
        }
        let e = self.efficiency * harvest_power_mw.max(0.0) * 1e-3 * slot_s / self.leakage_fraction;
        e.min(self.max_energy_j())
    }
}

/// RC charging curve of a capacitor fed with constant power `power_mw`:
/// v(t) = sqrt(P·r_p − e^(−2t/(c·r_p))·(P·r_p − v0²)).
pub fn capacitor_voltage(
    power_mw: f64,
    buffer: &EnergyBuffer,
    v0: f64,
    elapsed_s: f64,
) -> Result<f64, EnergyError> {
    let p = finite("power_mw", power_mw)? * 1e-3;
    let v0 = finite("v0", v0)?;
    let t = finite("elapsed", elapsed_s)?;
    let c = finite("capacitance_f", buffer.capacitance_f)?;
    let rp = finite("parallel_resistance_ohm", buffer.parallel_resistance_ohm)?;
    if t < 0.0 {
        return Err(EnergyError::InvalidParameter { name: "elapsed", value: t });
    }
    let pr = p * rp;
    let radicand = pr - (-2.0 * t / (c * rp)).exp() * (pr - v0 * v0);
    if radicand < -RADICAND_TOLERANCE {
        return Err(EnergyError::NegativeRadicand(radicand));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// Pure form of [`EnergyBuffer::step`].
pub fn buffer_step(buffer: &EnergyBuffer, harvest_power_mw: f64, slot_s: f64) -> Result<EnergyBuffer, EnergyError> {
    let mut next = buffer.clone();
    next.step(harvest_power_mw, slot_s)?;
    Ok(next)
}

/// Two isolated capacitors: one for MCU and sensing, one for the radio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedStore {
    pub sense: EnergyBuffer,
    pub radio: EnergyBuffer,
    /// Λ: share given to the buffer whose task is pending.
    pub split_high: f64,
    /// λ: share given to the other buffer.
    pub split_low: f64,
}

impl FederatedStore {
    pub fn new(sense: EnergyBuffer, radio: EnergyBuffer, split_high: f64, split_low: f64) -> Result<Self, EnergyError> {
        finite("split_high", split_high)?;
        finite("split_low", split_low)?;
        if (split_high + split_low - 1.0).abs() > 1e-9 {
            return Err(EnergyError::InvalidParameter {
                name: "split_high + split_low",
                value: split_high + split_low,
            });
        }
        if !(split_high > split_low && split_low > 0.0) {
            return Err(EnergyError::InvalidParameter { name: "split_low", value: split_low });
        }
        Ok(Self {
            sense,
            radio,
            split_high,
            split_low,
        })
    }

    pub fn usable_energy_j(&self) -> f64 {
        self.sense.usable_energy_j() + self.radio.usable_energy_j()
    }
}

/// Divides harvested power between the sense and radio buffers. The sense
/// buffer gets Λ while sensing is pending, λ otherwise.
pub fn split_harvest(store: &FederatedStore, harvest_power_mw: f64, sense_active: bool) -> Result<(f64, f64), EnergyError> {
    let p = finite("harvest_power_mw", harvest_power_mw)?;
    if p < 0.0 {
        return Err(EnergyError::InvalidParameter { name: "harvest_power_mw", value: p });
    }
    let to_sense = if sense_active { store.split_high } else { store.split_low } * p;
    // The radio share is the remainder so the split conserves power exactly.
    Ok((to_sense, p - to_sense))
}
