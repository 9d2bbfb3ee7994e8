//! Messages, packets and their binary encoding.
//!
//! Layout (little-endian throughout, documented in `docs/wire.md`):
//!
//! ```text
//! beacon:  "BC" ver app seq:u32 n rate_cur[n]:u16 rate_new[n]:u16
//!          m sync_cur[m]:u16 sync_new[m]:u16 act_flag [act_state act_target]
//! sensor:  "SD" ver app module in_reply_to:u32 dev_state energy_uj:u32
//!          k {sensor_id value:i32 sample_time_ms:u32}[k]
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceState;

pub const WIRE_VERSION: u8 = 1;
pub const BEACON_MAGIC: [u8; 2] = *b"BC";
pub const SENSOR_MAGIC: [u8; 2] = *b"SD";
/// BLE data PDU payload ceiling.
pub const MAX_PDU_BYTES: usize = 251;
pub const MAX_APPS: u8 = 40;
/// Sensor values travel as value × 1000 in an i32.
pub const VALUE_SCALE: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("malformed packet at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("encoded packet is {len} bytes, above the {MAX_PDU_BYTES}-byte PDU limit")]
    Oversize { len: usize },
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("application {0} exceeds the {MAX_APPS} available channels")]
    TooManyApps(u32),
    #[error("application ids start at 1, got {0}")]
    InvalidAppId(u32),
}

fn invalid(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::InvalidMessage(msg.into())
}

/// Per-module reading counts within the current period.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SyncVector(pub Vec<u16>);

impl SyncVector {
    pub fn zeros(modules: usize) -> Self {
        Self(vec![0; modules])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, module: usize) -> u16 {
        self.0[module]
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&v| v as u32).sum()
    }
}

impl From<Vec<u16>> for SyncVector {
    fn from(v: Vec<u16>) -> Self {
        Self(v)
    }
}

impl std::fmt::Display for SyncVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Reading {
    pub sensor_id: u8,
    /// value × 1000
    pub value: i32,
    pub sample_time_ms: u32,
}

impl Reading {
    pub fn from_value(sensor_id: u8, value: f64, sample_time_ms: u32) -> Self {
        Self {
            sensor_id,
            value: (value * VALUE_SCALE).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32,
            sample_time_ms,
        }
    }

    pub fn value(&self) -> f64 {
        self.value as f64 / VALUE_SCALE
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorDataMsg {
    pub app_id: u8,
    pub module_id: u8,
    pub readings: Vec<Reading>,
}

impl SensorDataMsg {
    pub fn new(app_id: u8, module_id: u8, readings: Vec<Reading>) -> Result<Self, ProtocolError> {
        let msg = Self {
            app_id,
            module_id,
            readings,
        };
        msg.validate()?;
        Ok(msg)
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        if self.readings.is_empty() {
            return Err(invalid("sensor data carries no readings"));
        }
        if self.readings.len() > u8::MAX as usize {
            return Err(invalid("more than 255 readings"));
        }
        Ok(())
    }
}

/// Current and newly assigned per-sensor rates (readings per period).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RateControlMsg {
    pub rate_current: Vec<u16>,
    pub rate_new: Vec<u16>,
}

impl RateControlMsg {
    pub fn new(rate_current: Vec<u16>, rate_new: Vec<u16>) -> Result<Self, ProtocolError> {
        let msg = Self { rate_current, rate_new };
        msg.validate()?;
        Ok(msg)
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        if self.rate_current.len() != self.rate_new.len() {
            return Err(invalid("rate_current and rate_new differ in length"));
        }
        if self.rate_current.len() > u8::MAX as usize {
            return Err(invalid("more than 255 sensor rates"));
        }
        Ok(())
    }
}

/// Vector synchronization state: counts received (`current`) and solicited (`new`).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AppSynchMsg {
    pub sync_current: SyncVector,
    pub sync_new: SyncVector,
}

impl AppSynchMsg {
    pub fn new(sync_current: SyncVector, sync_new: SyncVector) -> Result<Self, ProtocolError> {
        let msg = Self {
            sync_current,
            sync_new,
        };
        msg.validate()?;
        Ok(msg)
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        if self.sync_current.len() != self.sync_new.len() {
            return Err(invalid("sync vectors differ in length"));
        }
        if self.sync_current.len() > u8::MAX as usize {
            return Err(invalid("more than 255 modules"));
        }
        let mut increments = 0u32;
        for (cur, new) in self.sync_current.0.iter().zip(&self.sync_new.0) {
            if new < cur {
                return Err(invalid("sync_new is below sync_current"));
            }
            increments += (new - cur) as u32;
        }
        if increments > 1 {
            return Err(invalid("more than one reading solicited"));
        }
        Ok(())
    }

    /// The module asked to report, if any.
    pub fn solicited_module(&self) -> Option<usize> {
        self.sync_current
            .0
            .iter()
            .zip(&self.sync_new.0)
            .position(|(cur, new)| new > cur)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActuatorControlMsg {
    pub state: bool,
    pub target_module: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Beacon {
    pub app_id: u8,
    pub seq: u32,
    pub rate_control: RateControlMsg,
    pub app_synch: AppSynchMsg,
    pub actuator_control: Option<ActuatorControlMsg>,
}

impl Beacon {
    fn validate(&self) -> Result<(), ProtocolError> {
        channel_for_app(self.app_id as u32)?;
        self.rate_control.validate()?;
        self.app_synch.validate()?;
        if let Some(act) = self.actuator_control {
            if act.target_module as usize >= self.app_synch.sync_current.len() {
                return Err(invalid(format!(
                    "actuator target {} outside {} modules",
                    act.target_module,
                    self.app_synch.sync_current.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorDataPacket {
    pub app_id: u8,
    pub module_id: u8,
    /// Sequence number of the soliciting beacon.
    pub in_reply_to: u32,
    /// Device state piggy-backed for the aggregator.
    pub device_state: DeviceState,
    /// Usable stored energy at send time, saturated to u32.
    pub energy_uj: u32,
    pub payload: SensorDataMsg,
}

impl SensorDataPacket {
    pub fn new(
        in_reply_to: u32,
        device_state: DeviceState,
        energy_uj: u32,
        payload: SensorDataMsg,
    ) -> Result<Self, ProtocolError> {
        let pkt = Self {
            app_id: payload.app_id,
            module_id: payload.module_id,
            in_reply_to,
            device_state,
            energy_uj,
            payload,
        };
        pkt.validate()?;
        Ok(pkt)
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        channel_for_app(self.app_id as u32)?;
        self.payload.validate()?;
        if self.payload.app_id != self.app_id || self.payload.module_id != self.module_id {
            return Err(invalid("payload addressing differs from packet header"));
        }
        Ok(())
    }
}

/// One of the 40 BLE channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelId(u8);

impl ChannelId {
    pub fn index(self) -> u8 {
        self.0
    }
}

/// Application `i` uses channel `i - 1`.
pub fn channel_for_app(app_id: u32) -> Result<ChannelId, ProtocolError> {
    match app_id {
        0 => Err(ProtocolError::InvalidAppId(0)),
        id if id > MAX_APPS as u32 => Err(ProtocolError::TooManyApps(id)),
        id => Ok(ChannelId((id - 1) as u8)),
    }
}

fn put_u16s(out: &mut Vec<u8>, values: &[u16]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn finish(out: Vec<u8>) -> Result<Vec<u8>, ProtocolError> {
    if out.len() > MAX_PDU_BYTES {
        Err(ProtocolError::Oversize { len: out.len() })
    } else {
        Ok(out)
    }
}

pub fn encode_beacon(b: &Beacon) -> Result<Vec<u8>, ProtocolError> {
    b.validate()?;
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&BEACON_MAGIC);
    out.push(WIRE_VERSION);
    out.push(b.app_id);
    out.extend_from_slice(&b.seq.to_le_bytes());
    out.push(b.rate_control.rate_current.len() as u8);
    put_u16s(&mut out, &b.rate_control.rate_current);
    put_u16s(&mut out, &b.rate_control.rate_new);
    out.push(b.app_synch.sync_current.len() as u8);
    put_u16s(&mut out, b.app_synch.sync_current.as_slice());
    put_u16s(&mut out, b.app_synch.sync_new.as_slice());
    match b.actuator_control {
        None => out.push(0),
        Some(act) => {
            out.push(1);
            out.push(act.state as u8);
            out.push(act.target_module);
        }
    }
    finish(out)
}

pub fn encode_sensor_packet(p: &SensorDataPacket) -> Result<Vec<u8>, ProtocolError> {
    p.validate()?;
    let mut out = Vec::with_capacity(32);
    out.extend_from_slice(&SENSOR_MAGIC);
    out.push(WIRE_VERSION);
    out.push(p.app_id);
    out.push(p.module_id);
    out.extend_from_slice(&p.in_reply_to.to_le_bytes());
    out.push(p.device_state.wire_code());
    out.extend_from_slice(&p.energy_uj.to_le_bytes());
    out.push(p.payload.readings.len() as u8);
    for r in &p.payload.readings {
        out.push(r.sensor_id);
        out.extend_from_slice(&r.value.to_le_bytes());
        out.extend_from_slice(&r.sample_time_ms.to_le_bytes());
    }
    finish(out)
}

/// Bounds-checked cursor; every failure names the offending offset.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn fail<T>(&self, offset: usize, reason: impl Into<String>) -> Result<T, ProtocolError> {
        Err(ProtocolError::Malformed {
            offset,
            reason: reason.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() - self.pos < n {
            return self.fail(self.pos, format!("truncated reading {what}"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, ProtocolError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, ProtocolError> {
        let s = self.take(2, what)?;
        Ok(u16::from_le_bytes([s[0], s[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, ProtocolError> {
        let s = self.take(4, what)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }

    fn i32(&mut self, what: &str) -> Result<i32, ProtocolError> {
        Ok(self.u32(what)? as i32)
    }

    fn u16s(&mut self, n: usize, what: &str) -> Result<Vec<u16>, ProtocolError> {
        (0..n).map(|_| self.u16(what)).collect()
    }

    fn flag(&mut self, what: &str) -> Result<bool, ProtocolError> {
        let at = self.pos;
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            v => self.fail(at, format!("{what} must be 0 or 1, got {v}")),
        }
    }

    fn header(&mut self, magic: [u8; 2]) -> Result<(), ProtocolError> {
        if self.buf.is_empty() {
            return self.fail(0, "empty input");
        }
        let m = self.take(2, "magic")?;
        if m != magic {
            return self.fail(0, format!("bad magic {:02x}{:02x}", m[0], m[1]));
        }
        let v = self.u8("version")?;
        if v != WIRE_VERSION {
            return self.fail(2, format!("unsupported version {v}"));
        }
        Ok(())
    }

    fn app_id(&mut self) -> Result<u8, ProtocolError> {
        let at = self.pos;
        let id = self.u8("app_id")?;
        if channel_for_app(id as u32).is_err() {
            return self.fail(at, format!("app_id {id} outside 1..={MAX_APPS}"));
        }
        Ok(id)
    }

    fn end(&self) -> Result<(), ProtocolError> {
        if self.pos != self.buf.len() {
            return self.fail(self.pos, format!("{} trailing bytes", self.buf.len() - self.pos));
        }
        Ok(())
    }
}

fn invariant_at<T>(offset: usize, r: Result<T, ProtocolError>) -> Result<T, ProtocolError> {
    r.map_err(|e| ProtocolError::Malformed {
        offset,
        reason: e.to_string(),
    })
}

pub fn decode_beacon(bytes: &[u8]) -> Result<Beacon, ProtocolError> {
    let mut c = Cursor::new(bytes);
    c.header(BEACON_MAGIC)?;
    let app_id = c.app_id()?;
    let seq = c.u32("seq")?;
    let rates_at = c.pos;
    let n = c.u8("rate count")? as usize;
    let rate_current = c.u16s(n, "rate_current")?;
    let rate_new = c.u16s(n, "rate_new")?;
    let rate_control = invariant_at(rates_at, RateControlMsg::new(rate_current, rate_new))?;
    let sync_at = c.pos;
    let m = c.u8("module count")? as usize;
    let sync_current = SyncVector(c.u16s(m, "sync_current")?);
    let sync_new = SyncVector(c.u16s(m, "sync_new")?);
    let app_synch = invariant_at(sync_at, AppSynchMsg::new(sync_current, sync_new))?;
    let act_at = c.pos;
    let actuator_control = if c.flag("actuator flag")? {
        let state = c.flag("actuator state")?;
        let target_module = c.u8("actuator target")?;
        if target_module as usize >= m {
            return c.fail(act_at + 2, format!("actuator target {target_module} outside {m} modules"));
        }
        Some(ActuatorControlMsg { state, target_module })
    } else {
        None
    };
    c.end()?;
    Ok(Beacon {
        app_id,
        seq,
        rate_control,
        app_synch,
        actuator_control,
    })
}

pub fn decode_sensor_packet(bytes: &[u8]) -> Result<SensorDataPacket, ProtocolError> {
    let mut c = Cursor::new(bytes);
    c.header(SENSOR_MAGIC)?;
    let app_id = c.app_id()?;
    let module_id = c.u8("module_id")?;
    let in_reply_to = c.u32("in_reply_to")?;
    let state_at = c.pos;
    let code = c.u8("device_state")?;
    let device_state = match DeviceState::from_wire_code(code) {
        Some(s) => s,
        None => return c.fail(state_at, format!("unknown device state {code}")),
    };
    let energy_uj = c.u32("energy_uj")?;
    let count_at = c.pos;
    let k = c.u8("reading count")? as usize;
    if k == 0 {
        return c.fail(count_at, "sensor data carries no readings");
    }
    let mut readings = Vec::with_capacity(k);
    for _ in 0..k {
        readings.push(Reading {
            sensor_id: c.u8("sensor_id")?,
            value: c.i32("value")?,
            sample_time_ms: c.u32("sample_time_ms")?,
        });
    }
    c.end()?;
    Ok(SensorDataPacket {
        app_id,
        module_id,
        in_reply_to,
        device_state,
        energy_uj,
        payload: SensorDataMsg {
            app_id,
            module_id,
            readings,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Beacon(Beacon),
    SensorData(SensorDataPacket),
}

/// Decodes either packet type by its magic.
pub fn decode_any(bytes: &[u8]) -> Result<Packet, ProtocolError> {
    match bytes.get(..2) {
        Some(m) if m == BEACON_MAGIC => decode_beacon(bytes).map(Packet::Beacon),
        Some(m) if m == SENSOR_MAGIC => decode_sensor_packet(bytes).map(Packet::SensorData),
        Some(m) => Err(ProtocolError::Malformed {
            offset: 0,
            reason: format!("unknown magic {:02x}{:02x}", m[0], m[1]),
        }),
        None => Err(ProtocolError::Malformed {
            offset: bytes.len(),
            reason: if bytes.is_empty() { "empty input".into() } else { "truncated reading magic".into() },
        }),
    }
}

/// Human-readable field dump of a packet, one field per line with byte offsets.
pub fn describe_packet(bytes: &[u8]) -> Result<String, ProtocolError> {
    let mut s = String::new();
    match decode_any(bytes)? {
        Packet::Beacon(b) => {
            let n = b.rate_control.rate_current.len();
            let m = b.app_synch.sync_current.len();
            let _ = writeln!(s, "beacon ({} bytes, version {WIRE_VERSION})", bytes.len());
            let _ = writeln!(s, "  @0   magic            \"BC\"");
            let _ = writeln!(s, "  @3   app_id           {} (channel {})", b.app_id, b.app_id - 1);
            let _ = writeln!(s, "  @4   seq              {}", b.seq);
            let _ = writeln!(s, "  @8   rate count       {n}");
            let _ = writeln!(s, "  @9   rate_current     {:?}", b.rate_control.rate_current);
            let _ = writeln!(s, "  @{:<3} rate_new         {:?}", 9 + 2 * n, b.rate_control.rate_new);
            let sync = 9 + 4 * n;
            let _ = writeln!(s, "  @{sync:<3} module count     {m}");
            let _ = writeln!(s, "  @{:<3} sync_current     {}", sync + 1, b.app_synch.sync_current);
            let _ = writeln!(s, "  @{:<3} sync_new         {}", sync + 1 + 2 * m, b.app_synch.sync_new);
            let act = sync + 1 + 4 * m;
            match b.actuator_control {
                None => {
                    let _ = writeln!(s, "  @{act:<3} actuator_control none");
                }
                Some(a) => {
                    let _ = writeln!(
                        s,
                        "  @{act:<3} actuator_control {} module {}",
                        if a.state { "on" } else { "off" },
                        a.target_module
                    );
                }
            }
            if let Some(j) = b.app_synch.solicited_module() {
                let _ = writeln!(s, "  solicits module {j}");
            }
        }
        Packet::SensorData(p) => {
            let _ = writeln!(s, "sensor_data ({} bytes, version {WIRE_VERSION})", bytes.len());
            let _ = writeln!(s, "  @0   magic            \"SD\"");
            let _ = writeln!(s, "  @3   app_id           {}", p.app_id);
            let _ = writeln!(s, "  @4   module_id        {}", p.module_id);
            let _ = writeln!(s, "  @5   in_reply_to      {}", p.in_reply_to);
            let _ = writeln!(s, "  @9   device_state     {}", p.device_state);
            let _ = writeln!(s, "  @10  energy_uj        {}", p.energy_uj);
            let _ = writeln!(s, "  @14  reading count    {}", p.payload.readings.len());
            for (i, r) in p.payload.readings.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "  @{:<3} reading          sensor {} value {} t={} ms",
                    15 + 9 * i,
                    r.sensor_id,
                    r.value(),
                    r.sample_time_ms
                );
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_beacon() -> Beacon {
        Beacon {
            app_id: 1,
            seq: 0,
            rate_control: RateControlMsg::new(vec![3, 1], vec![3, 1]).unwrap(),
            app_synch: AppSynchMsg::new(vec![0, 0].into(), vec![1, 0].into()).unwrap(),
            actuator_control: None,
        }
    }

    fn packet() -> SensorDataPacket {
        let msg = SensorDataMsg::new(2, 1, vec![Reading::from_value(0, -12.345, 4000)]).unwrap();
        SensorDataPacket::new(7, DeviceState::Normal, 512, msg).unwrap()
    }

    #[test]
    fn first_beacon_round_trips() {
        let b = first_beacon();
        let bytes = encode_beacon(&b).unwrap();
        let back = decode_beacon(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.app_synch.sync_current.as_slice(), &[0, 0]);
        assert_eq!(back.app_synch.sync_new.as_slice(), &[1, 0]);
        assert_eq!(back.app_synch.solicited_module(), Some(0));
    }

    #[test]
    fn seq_changes_encoding() {
        let a = first_beacon();
        let mut b = a.clone();
        b.seq = 1;
        assert_ne!(encode_beacon(&a).unwrap(), encode_beacon(&b).unwrap());
    }

    #[test]
    fn empty_input_is_malformed() {
        assert!(matches!(decode_beacon(&[]), Err(ProtocolError::Malformed { offset: 0, .. })));
        assert!(matches!(decode_sensor_packet(&[]), Err(ProtocolError::Malformed { offset: 0, .. })));
    }

    #[test]
    fn flipped_length_byte_is_malformed() {
        let mut bytes = encode_beacon(&first_beacon()).unwrap();
        bytes[8] ^= 0x40;
        assert!(matches!(decode_beacon(&bytes), Err(ProtocolError::Malformed { .. })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_sensor_packet(&packet()).unwrap();
        bytes.push(0);
        let err = decode_sensor_packet(&bytes).unwrap_err();
        assert_eq!(
            err,
            ProtocolError::Malformed {
                offset: bytes.len() - 1,
                reason: "1 trailing bytes".into()
            }
        );
    }

    #[test]
    fn sensor_packet_round_trip_and_value_scaling() {
        let p = packet();
        let back = decode_sensor_packet(&encode_sensor_packet(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.payload.readings[0].value, -12345);
        assert!((back.payload.readings[0].value() + 12.345).abs() < 1e-12);
    }

    #[test]
    fn empty_readings_rejected_at_construction() {
        assert!(SensorDataMsg::new(1, 0, vec![]).is_err());
    }

    #[test]
    fn sync_invariants_enforced() {
        assert!(AppSynchMsg::new(vec![1, 0].into(), vec![0, 0].into()).is_err());
        assert!(AppSynchMsg::new(vec![0, 0].into(), vec![1, 1].into()).is_err());
        assert!(AppSynchMsg::new(vec![0, 0].into(), vec![2, 0].into()).is_err());
        assert!(AppSynchMsg::new(vec![0].into(), vec![0, 0].into()).is_err());
    }

    #[test]
    fn oversize_beacon_rejected() {
        let m = 40;
        let b = Beacon {
            app_id: 3,
            seq: 9,
            rate_control: RateControlMsg::new(vec![1; m], vec![1; m]).unwrap(),
            app_synch: AppSynchMsg::new(SyncVector::zeros(m), SyncVector::zeros(m)).unwrap(),
            actuator_control: None,
        };
        assert!(matches!(encode_beacon(&b), Err(ProtocolError::Oversize { .. })));
    }

    #[test]
    fn channel_mapping() {
        assert_eq!(channel_for_app(1).unwrap().index(), 0);
        assert_eq!(channel_for_app(40).unwrap().index(), 39);
        assert_eq!(channel_for_app(41), Err(ProtocolError::TooManyApps(41)));
        assert_eq!(channel_for_app(0), Err(ProtocolError::InvalidAppId(0)));
    }

    #[test]
    fn actuator_target_checked() {
        let mut b = first_beacon();
        b.actuator_control = Some(ActuatorControlMsg {
            state: true,
            target_module: 1,
        });
        let bytes = encode_beacon(&b).unwrap();
        assert_eq!(decode_beacon(&bytes).unwrap(), b);
        b.actuator_control = Some(ActuatorControlMsg {
            state: true,
            target_module: 2,
        });
        assert!(encode_beacon(&b).is_err());
    }

    #[test]
    fn describe_names_fields() {
        let text = describe_packet(&encode_beacon(&first_beacon()).unwrap()).unwrap();
        assert!(text.contains("sync_new         [1,0]"));
        assert!(text.contains("solicits module 0"));
        let text = describe_packet(&encode_sensor_packet(&packet()).unwrap()).unwrap();
        assert!(text.contains("in_reply_to      7"));
        assert!(describe_packet(b"ZZ").is_err());
    }
}
