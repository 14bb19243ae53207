//! Core domain types shared by every analysis module.
//!
//! Timestamps are UTC seconds since the Unix epoch. On the wire they are
//! ISO 8601 strings with an explicit offset (or `Z`); internally everything
//! is an `i64`, and local-time views are derived with a fixed offset where an
//! analysis needs one.

use std::collections::HashSet;
use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::battery::DischargeObservation;
use crate::error::{Error, Result};

/// UTC seconds since the Unix epoch.
pub type Timestamp = i64;

pub const SECONDS_PER_HOUR: i64 = 3600;
pub const SECONDS_PER_DAY: i64 = 86_400;

/// Parses an ISO 8601 / RFC 3339 timestamp that carries an explicit offset.
pub fn parse_timestamp(s: &str) -> Result<Timestamp> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|dt| dt.timestamp())
        .map_err(|_| Error::invalid("timestamp", "is not ISO 8601 with an offset", s))
}

/// Formats a timestamp as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_timestamp(ts: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|dt| dt.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| ts.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceOs {
    Android,
    Ios,
}

impl DeviceOs {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceOs::Android => "android",
            DeviceOs::Ios => "ios",
        }
    }
}

impl fmt::Display for DeviceOs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanKind {
    Bluetooth,
    Gps,
    Battery,
}

impl ScanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanKind::Bluetooth => "bluetooth",
            ScanKind::Gps => "gps",
            ScanKind::Battery => "battery",
        }
    }
}

impl fmt::Display for ScanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single device seen during a Bluetooth scan.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BluetoothSighting {
    /// Lowercase hex SHA-256 digest, 64 characters.
    pub hashed_device_id: String,
    /// 24-bit Class of Device field.
    pub class_of_device: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BluetoothScan {
    pub sightings: Vec<BluetoothSighting>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub latitude: f64,
    pub longitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySample {
    pub level_pct: f64,
    pub charging: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Bluetooth(BluetoothScan),
    Gps(GpsFix),
    Battery(BatterySample),
}

impl Payload {
    pub fn kind(&self) -> ScanKind {
        match self {
            Payload::Bluetooth(_) => ScanKind::Bluetooth,
            Payload::Gps(_) => ScanKind::Gps,
            Payload::Battery(_) => ScanKind::Battery,
        }
    }
}

/// One timestamped sensor observation for a participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EventWire", into = "EventWire")]
pub struct ScanEvent {
    pub participant_id: String,
    pub device_os: DeviceOs,
    pub device_model: Option<String>,
    pub timestamp: Timestamp,
    pub kind: ScanKind,
    pub payload: Payload,
}

impl ScanEvent {
    pub fn bluetooth(&self) -> Option<&BluetoothScan> {
        match &self.payload {
            Payload::Bluetooth(b) => Some(b),
            _ => None,
        }
    }

    pub fn gps(&self) -> Option<&GpsFix> {
        match &self.payload {
            Payload::Gps(g) => Some(g),
            _ => None,
        }
    }

    pub fn battery(&self) -> Option<&BatterySample> {
        match &self.payload {
            Payload::Battery(b) => Some(b),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EventWire {
    participant_id: String,
    device_os: DeviceOs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    device_model: Option<String>,
    timestamp: String,
    kind: ScanKind,
    payload: Payload,
}

impl TryFrom<EventWire> for ScanEvent {
    type Error = Error;

    fn try_from(w: EventWire) -> Result<Self> {
        Ok(ScanEvent {
            participant_id: w.participant_id,
            device_os: w.device_os,
            device_model: w.device_model,
            timestamp: parse_timestamp(&w.timestamp)?,
            kind: w.kind,
            payload: w.payload,
        })
    }
}

impl From<ScanEvent> for EventWire {
    fn from(e: ScanEvent) -> Self {
        EventWire {
            participant_id: e.participant_id,
            device_os: e.device_os,
            device_model: e.device_model,
            timestamp: format_timestamp(e.timestamp),
            kind: e.kind,
            payload: e.payload,
        }
    }
}

/// Returns true for a 64-character lowercase hex string.
pub fn is_hashed_id(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Checks every type invariant of `event` and hands it back unchanged.
pub fn validate_event(event: ScanEvent) -> Result<ScanEvent> {
    if event.participant_id.is_empty() {
        return Err(Error::invalid("participant_id", "is empty", "\"\""));
    }
    if event.payload.kind() != event.kind {
        return Err(Error::KindMismatch {
            kind: event.kind.as_str(),
            payload: event.payload.kind().as_str(),
        });
    }
    match &event.payload {
        Payload::Bluetooth(scan) => {
            let mut seen = HashSet::with_capacity(scan.sightings.len());
            for s in &scan.sightings {
                if !is_hashed_id(&s.hashed_device_id) {
                    return Err(Error::invalid(
                        "hashed_device_id",
                        "is not 64 lowercase hex characters",
                        &s.hashed_device_id,
                    ));
                }
                if s.class_of_device >= 1 << 24 {
                    return Err(Error::invalid(
                        "class_of_device",
                        "exceeds 24 bits",
                        format!("{:#x}", s.class_of_device),
                    ));
                }
                if !seen.insert(s.hashed_device_id.as_str()) {
                    return Err(Error::invalid(
                        "hashed_device_id",
                        "is duplicated within one scan",
                        &s.hashed_device_id,
                    ));
                }
            }
        }
        Payload::Gps(fix) => {
            if !(-90.0..=90.0).contains(&fix.latitude) {
                return Err(Error::invalid("latitude", "out of range", fix.latitude));
            }
            if !(-180.0..=180.0).contains(&fix.longitude) {
                return Err(Error::invalid("longitude", "out of range", fix.longitude));
            }
            if let Some(acc) = fix.accuracy_m {
                if !(acc >= 0.0) || !acc.is_finite() {
                    return Err(Error::invalid("accuracy_m", "is negative or not finite", acc));
                }
            }
        }
        Payload::Battery(b) => {
            if !(0.0..=100.0).contains(&b.level_pct) {
                return Err(Error::invalid("level_pct", "out of range", b.level_pct));
            }
        }
    }
    Ok(event)
}

/// One contiguous block of the study with a fixed scan interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleWeek {
    pub start: Timestamp,
    pub end: Timestamp,
    pub interval_minutes: f64,
}

impl ScheduleWeek {
    pub fn scans_per_hour(&self) -> f64 {
        60.0 / self.interval_minutes
    }

    pub fn hours(&self) -> f64 {
        (self.end - self.start) as f64 / SECONDS_PER_HOUR as f64
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        ts >= self.start && ts < self.end
    }
}

/// Ordered, non-overlapping scan blocks. Each block is half-open `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleWire", into = "ScheduleWire")]
pub struct StudySchedule {
    weeks: Vec<ScheduleWeek>,
}

impl StudySchedule {
    pub fn new(weeks: Vec<ScheduleWeek>) -> Result<Self> {
        for (i, w) in weeks.iter().enumerate() {
            if !(w.interval_minutes > 0.0) || !w.interval_minutes.is_finite() {
                return Err(Error::Schedule(format!(
                    "week {i}: interval_minutes must be positive, got {}",
                    w.interval_minutes
                )));
            }
            if w.end <= w.start {
                return Err(Error::Schedule(format!("week {i}: end is not after start")));
            }
            if i > 0 && w.start < weeks[i - 1].end {
                return Err(Error::Schedule(format!(
                    "week {i} overlaps or precedes week {}",
                    i - 1
                )));
            }
        }
        Ok(StudySchedule { weeks })
    }

    pub fn empty() -> Self {
        StudySchedule { weeks: Vec::new() }
    }

    /// Consecutive 7-day blocks starting at `start`, one per interval.
    pub fn weekly(start: Timestamp, intervals_minutes: &[f64]) -> Result<Self> {
        let week = 7 * SECONDS_PER_DAY;
        let weeks = intervals_minutes
            .iter()
            .enumerate()
            .map(|(i, &interval_minutes)| ScheduleWeek {
                start: start + i as i64 * week,
                end: start + (i as i64 + 1) * week,
                interval_minutes,
            })
            .collect();
        Self::new(weeks)
    }

    /// Four weeks scanning every 8, 5, 4 and 3 minutes.
    pub fn four_week(start: Timestamp) -> Self {
        Self::weekly(start, &[8.0, 5.0, 4.0, 3.0]).expect("static schedule is valid")
    }

    pub fn weeks(&self) -> &[ScheduleWeek] {
        &self.weeks
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn start(&self) -> Option<Timestamp> {
        self.weeks.first().map(|w| w.start)
    }

    pub fn end(&self) -> Option<Timestamp> {
        self.weeks.last().map(|w| w.end)
    }

    pub fn week_index(&self, ts: Timestamp) -> Option<usize> {
        self.weeks.iter().position(|w| w.contains(ts))
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.week_index(ts).is_some()
    }
}

#[derive(Serialize, Deserialize)]
struct ScheduleWire {
    weeks: Vec<WeekWire>,
}

#[derive(Serialize, Deserialize)]
struct WeekWire {
    start: String,
    end: String,
    interval_minutes: f64,
}

impl TryFrom<ScheduleWire> for StudySchedule {
    type Error = Error;

    fn try_from(w: ScheduleWire) -> Result<Self> {
        let weeks = w
            .weeks
            .into_iter()
            .map(|wk| {
                Ok(ScheduleWeek {
                    start: parse_timestamp(&wk.start)?,
                    end: parse_timestamp(&wk.end)?,
                    interval_minutes: wk.interval_minutes,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        StudySchedule::new(weeks)
    }
}

impl From<StudySchedule> for ScheduleWire {
    fn from(s: StudySchedule) -> Self {
        ScheduleWire {
            weeks: s
                .weeks
                .into_iter()
                .map(|w| WeekWire {
                    start: format_timestamp(w.start),
                    end: format_timestamp(w.end),
                    interval_minutes: w.interval_minutes,
                })
                .collect(),
        }
    }
}

/// Everything extracted for one participant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantFeatures {
    pub participant_id: String,
    pub completeness_pct: f64,
    /// Rows are hours 0..24; columns are (mean known, mean unknown).
    pub social_profile: [[f64; 2]; 24],
    pub cluster_count: Option<usize>,
    pub circadian_movement_by_week: Vec<(usize, Option<f64>)>,
    pub battery: Option<Vec<DischargeObservation>>,
}
