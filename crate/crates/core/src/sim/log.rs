//! Newline-delimited event log: `time_us,entity,event,detail`.
//!
//! The detail field is the remainder of the line and holds `key=value`
//! pairs separated by `;`. Values may contain commas (sync vectors do).

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, PartialEq)]
#[error("malformed log record {record}: {reason}")]
pub struct LogError {
    /// 1-based record number.
    pub record: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub time: SimTime,
    pub entity: String,
    pub event: String,
    pub detail: String,
}

impl LogRecord {
    /// Looks up `key` in the detail field.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.detail.split(';').find_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            (k == key).then_some(v)
        })
    }

    pub fn parse_field<T: FromStr>(&self, key: &str) -> Option<T> {
        self.field(key)?.parse().ok()
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.time.micros(), self.entity, self.event, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn push(&mut self, time: SimTime, entity: impl Into<String>, event: &str, detail: impl Into<String>) {
        self.records.push(LogRecord {
            time,
            entity: entity.into(),
            event: event.to_string(),
            detail: detail.into(),
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter()
    }

    /// Records of one event type.
    pub fn events<'a>(&'a self, event: &'a str) -> impl Iterator<Item = &'a LogRecord> + 'a {
        self.records.iter().filter(move |r| r.event == event)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * 48);
        for r in &self.records {
            let _ = writeln!(s, "{r}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| LogError {
                record: i + 1,
                reason: reason.to_string(),
            };
            let mut parts = line.splitn(4, ',');
            let time = parts
                .next()
                .and_then(|t| t.parse::<u64>().ok())
                .ok_or_else(|| bad("time is not an integer"))?;
            let entity = parts.next().filter(|e| !e.is_empty()).ok_or_else(|| bad("missing entity"))?;
            let event = parts.next().filter(|e| !e.is_empty()).ok_or_else(|| bad("missing event"))?;
            let detail = parts.next().ok_or_else(|| bad("missing detail"))?;
            if let Some(prev) = records.last().map(|r: &LogRecord| r.time) {
                if SimTime(time) < prev {
                    return Err(bad("time goes backwards"));
                }
            }
            records.push(LogRecord {
                time: SimTime(time),
                entity: entity.to_string(),
                event: event.to_string(),
                detail: detail.to_string(),
            });
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_commas_in_detail() {
        let mut log = EventLog::default();
        log.push(SimTime(5), "agg:1", "beacon_tx", "seq=0;v=[0,0];v_hat=[1,0]");
        log.push(SimTime(9), "dev:1.0", "beacon_rx", "seq=0");
        let text = log.to_text();
        let back = EventLog::parse(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.records[0].field("v_hat"), Some("[1,0]"));
        assert_eq!(back.records[0].parse_field::<u32>("seq"), Some(0));
    }

    #[test]
    fn malformed_records_are_numbered() {
        let err = EventLog::parse("1,sim,start,\nx,sim,end,\n").unwrap_err();
        assert_eq!(err.record, 2);
        let err = EventLog::parse("5,sim,start,\n4,sim,end,\n").unwrap_err();
        assert_eq!(err.record, 2);
        assert!(EventLog::parse("1,sim\n").is_err());
    }
}
