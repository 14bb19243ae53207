//! Bluetooth social context: familiar (known) versus stranger (unknown)
//! devices and their hour-of-day density.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::FixedOffset;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ScanEvent, StudySchedule, Timestamp, SECONDS_PER_DAY, SECONDS_PER_HOUR};

pub const DEFAULT_MIN_DAYS: usize = 3;

/// Participants reside in eastern Australia.
pub fn default_tz() -> FixedOffset {
    FixedOffset::east_opt(10 * 3600).expect("valid offset")
}

/// Parses `+HH:MM`, `-HH:MM`, `+HHMM` or `Z`.
pub fn parse_tz_offset(s: &str) -> Result<FixedOffset> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("z") {
        return Ok(FixedOffset::east_opt(0).expect("zero offset"));
    }
    let bad = || Error::invalid("tz-offset", "is not of the form +HH:MM", s);
    let (sign, rest) = match s.as_bytes().first() {
        Some(b'+') => (1, &s[1..]),
        Some(b'-') => (-1, &s[1..]),
        _ => return Err(bad()),
    };
    let digits: String = rest.chars().filter(|c| *c != ':').collect();
    if digits.len() != 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let hours: i32 = digits[..2].parse().map_err(|_| bad())?;
    let minutes: i32 = digits[2..].parse().map_err(|_| bad())?;
    if minutes >= 60 {
        return Err(bad());
    }
    FixedOffset::east_opt(sign * (hours * 3600 + minutes * 60)).ok_or_else(bad)
}

pub fn format_tz_offset(tz: FixedOffset) -> String {
    let secs = tz.local_minus_utc();
    let sign = if secs < 0 { '-' } else { '+' };
    let secs = secs.abs();
    format!("{sign}{:02}:{:02}", secs / 3600, (secs % 3600) / 60)
}

/// Local calendar day number (days since 1970-01-01 in local time).
pub fn local_day(ts: Timestamp, tz: FixedOffset) -> i64 {
    (ts + tz.local_minus_utc() as i64).div_euclid(SECONDS_PER_DAY)
}

pub fn local_hour(ts: Timestamp, tz: FixedOffset) -> usize {
    ((ts + tz.local_minus_utc() as i64).rem_euclid(SECONDS_PER_DAY) / SECONDS_PER_HOUR) as usize
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceHistory {
    pub hashed_device_id: String,
    /// Distinct local days the device was sighted.
    pub days: BTreeSet<i64>,
    pub sightings: usize,
}

pub fn device_histories(events: &[ScanEvent], tz: FixedOffset) -> BTreeMap<String, DeviceHistory> {
    let mut out: BTreeMap<String, DeviceHistory> = BTreeMap::new();
    for e in events {
        let Some(scan) = e.bluetooth() else { continue };
        let day = local_day(e.timestamp, tz);
        for s in &scan.sightings {
            let h = out
                .entry(s.hashed_device_id.clone())
                .or_insert_with(|| DeviceHistory {
                    hashed_device_id: s.hashed_device_id.clone(),
                    days: BTreeSet::new(),
                    sightings: 0,
                });
            h.days.insert(day);
            h.sightings += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DevicePartition {
    pub known: BTreeSet<String>,
    pub unknown: BTreeSet<String>,
}

impl DevicePartition {
    pub fn is_known(&self, id: &str) -> bool {
        self.known.contains(id)
    }
}

/// A device is known when it was sighted on at least `min_days` distinct local days.
pub fn classify_devices(events: &[ScanEvent], min_days: usize, tz: FixedOffset) -> DevicePartition {
    let mut p = DevicePartition::default();
    for (id, h) in device_histories(events, tz) {
        if h.days.len() >= min_days {
            p.known.insert(id);
        } else {
            p.unknown.insert(id);
        }
    }
    p
}

/// Denominator of the per-hour mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayBasis {
    /// Every study day counts; hours without scans contribute zero.
    StudyDays(u32),
    /// Per hour, only days with at least one scan in that hour count.
    DaysWithData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HourRow {
    pub hour: usize,
    pub mean_known: f64,
    pub mean_unknown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SocialProfile {
    pub rows: Vec<HourRow>,
    pub denominator_days: u32,
}

impl SocialProfile {
    pub fn as_matrix(&self) -> [[f64; 2]; 24] {
        let mut m = [[0.0; 2]; 24];
        for r in &self.rows {
            m[r.hour] = [r.mean_known, r.mean_unknown];
        }
        m
    }
}

/// Number of distinct local days touched by the schedule.
pub fn study_days(schedule: &StudySchedule, tz: FixedOffset) -> u32 {
    let days: BTreeSet<i64> = schedule
        .weeks()
        .iter()
        .flat_map(|w| local_day(w.start, tz)..=local_day(w.end - 1, tz))
        .collect();
    days.len() as u32
}

/// Mean number of distinct known and unknown devices sighted per hour of day.
///
/// Devices missing from `partition` are counted as unknown.
pub fn social_profile(
    events: &[ScanEvent],
    partition: &DevicePartition,
    tz: FixedOffset,
    basis: DayBasis,
) -> SocialProfile {
    // (day, hour) -> devices seen in that slot
    let mut slots: HashMap<(i64, usize), HashSet<&str>> = HashMap::new();
    for e in events {
        let Some(scan) = e.bluetooth() else { continue };
        let slot = slots
            .entry((local_day(e.timestamp, tz), local_hour(e.timestamp, tz)))
            .or_default();
        slot.extend(scan.sightings.iter().map(|s| s.hashed_device_id.as_str()));
    }

    let mut known = [0usize; 24];
    let mut unknown = [0usize; 24];
    let mut days_with_data = [0u32; 24];
    let mut all_days = BTreeSet::new();
    for ((day, hour), devices) in &slots {
        all_days.insert(*day);
        days_with_data[*hour] += 1;
        for d in devices {
            if partition.is_known(d) {
                known[*hour] += 1;
            } else {
                unknown[*hour] += 1;
            }
        }
    }

    let denominator_days = match basis {
        DayBasis::StudyDays(n) => n,
        DayBasis::DaysWithData => all_days.len() as u32,
    };
    let rows = (0..24)
        .map(|hour| {
            let denom = match basis {
                DayBasis::StudyDays(n) => n,
                DayBasis::DaysWithData => days_with_data[hour],
            };
            let mean = |count: usize| if denom == 0 { 0.0 } else { count as f64 / denom as f64 };
            HourRow {
                hour,
                mean_known: mean(known[hour]),
                mean_unknown: mean(unknown[hour]),
            }
        })
        .collect();
    SocialProfile {
        rows,
        denominator_days,
    }
}
