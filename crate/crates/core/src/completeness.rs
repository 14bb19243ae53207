//! Scheduled versus collected scan accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DeviceOs, ScanEvent, ScanKind, StudySchedule};
use crate::stats::{self, TwoSampleT};

/// Unrounded number of scans the schedule asks for.
pub fn scheduled_scans_exact(schedule: &StudySchedule) -> f64 {
    schedule
        .weeks()
        .iter()
        .map(|w| (w.end - w.start) as f64 / (w.interval_minutes * 60.0))
        .sum()
}

/// Total scheduled scans, rounded half-up once at the end.
pub fn scheduled_count(schedule: &StudySchedule) -> u64 {
    let exact = scheduled_scans_exact(schedule);
    // Absorb float noise so that e.g. 9155.999999999 counts as 9156.
    let nearest = exact.round();
    if (exact - nearest).abs() < 1e-9 * exact.max(1.0) {
        nearest as u64
    } else {
        (exact + 0.5).floor() as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KindTally {
    /// Distinct in-window timestamps.
    pub collected: u64,
    /// Events of the kind outside every schedule week.
    pub out_of_window: u64,
}

pub fn tally(events: &[ScanEvent], schedule: &StudySchedule, kind: ScanKind) -> KindTally {
    let mut inside = Vec::new();
    let mut out_of_window = 0;
    for e in events.iter().filter(|e| e.kind == kind) {
        if schedule.contains(e.timestamp) {
            inside.push(e.timestamp);
        } else {
            out_of_window += 1;
        }
    }
    inside.sort_unstable();
    inside.dedup();
    KindTally {
        collected: inside.len() as u64,
        out_of_window,
    }
}

fn percent(collected: u64, scheduled: u64) -> Result<f64> {
    if scheduled == 0 {
        return Err(Error::EmptySchedule);
    }
    Ok((100.0 * collected as f64 / scheduled as f64).min(100.0))
}

/// Percentage of scheduled scans of `kind` that were uploaded.
///
/// Events must belong to a single participant. Repeated timestamps count
/// once and the result is capped at 100.
pub fn completeness_pct(events: &[ScanEvent], schedule: &StudySchedule, kind: ScanKind) -> Result<f64> {
    percent(tally(events, schedule, kind).collected, scheduled_count(schedule))
}

/// How one per-participant number is formed from the Bluetooth and GPS streams.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletenessMode {
    /// Mean of Bluetooth and GPS completeness.
    #[default]
    MeanOfKinds,
    /// A scan cycle counts once if either stream uploaded at that timestamp.
    ScanCycles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletenessRow {
    pub participant_id: String,
    pub os: DeviceOs,
    pub model: Option<String>,
    pub scheduled: u64,
    pub collected: f64,
    pub bluetooth_collected: u64,
    pub gps_collected: u64,
    pub out_of_window: u64,
    pub completeness_pct: f64,
}

/// One report row for a participant. `events` must all share one participant.
pub fn participant_completeness(
    events: &[ScanEvent],
    schedule: &StudySchedule,
    mode: CompletenessMode,
) -> Result<CompletenessRow> {
    let first = events
        .first()
        .ok_or_else(|| Error::InsufficientData("participant has no events".into()))?;
    let scheduled = scheduled_count(schedule);
    let bt = tally(events, schedule, ScanKind::Bluetooth);
    let gps = tally(events, schedule, ScanKind::Gps);
    let (collected, pct) = match mode {
        CompletenessMode::MeanOfKinds => {
            let pct = 0.5 * (percent(bt.collected, scheduled)? + percent(gps.collected, scheduled)?);
            (0.5 * (bt.collected + gps.collected) as f64, pct)
        }
        CompletenessMode::ScanCycles => {
            let mut cycles: Vec<i64> = events
                .iter()
                .filter(|e| matches!(e.kind, ScanKind::Bluetooth | ScanKind::Gps))
                .filter(|e| schedule.contains(e.timestamp))
                .map(|e| e.timestamp)
                .collect();
            cycles.sort_unstable();
            cycles.dedup();
            let n = cycles.len() as u64;
            (n as f64, percent(n, scheduled)?)
        }
    };
    Ok(CompletenessRow {
        participant_id: first.participant_id.clone(),
        os: first.device_os,
        model: first.device_model.clone(),
        scheduled,
        collected,
        bluetooth_collected: bt.collected,
        gps_collected: gps.collected,
        out_of_window: bt.out_of_window + gps.out_of_window,
        completeness_pct: pct,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single participant.
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OsSummary {
    pub groups: BTreeMap<DeviceOs, GroupSummary>,
    /// Android minus iOS, pooled-variance t test. Needs two participants per group.
    pub t_test: Option<TwoSampleT>,
}

pub fn summarize(values: &[f64]) -> Result<GroupSummary> {
    if values.is_empty() {
        return Err(Error::InsufficientData("empty group".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (n > 1).then(|| stats::variance(values).sqrt());
    Ok(GroupSummary { n, mean, sd })
}

/// Mean and standard deviation of completeness per operating system.
pub fn completeness_by_os(rows: &[CompletenessRow]) -> Result<OsSummary> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no participants".into()));
    }
    let mut by_os: BTreeMap<DeviceOs, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_os.entry(r.os).or_default().push(r.completeness_pct);
    }
    let groups = by_os
        .iter()
        .map(|(os, v)| Ok((*os, summarize(v)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let t_test = match (by_os.get(&DeviceOs::Android), by_os.get(&DeviceOs::Ios)) {
        (Some(a), Some(i)) if a.len() >= 2 && i.len() >= 2 => stats::two_sample_t(a, i, false).ok(),
        _ => None,
    };
    Ok(OsSummary { groups, t_test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BluetoothScan, GpsFix, Payload, ScheduleWeek};
    use proptest::prelude::*;

    const START: i64 = 1_551_621_600;

    fn ev(ts: i64, kind: ScanKind) -> ScanEvent {
        let payload = match kind {
            ScanKind::Gps => Payload::Gps(GpsFix {
                latitude: -33.0,
                longitude: 151.0,
                accuracy_m: None,
            }),
            _ => Payload::Bluetooth(BluetoothScan::default()),
        };
        ScanEvent {
            participant_id: "p".into(),
            device_os: DeviceOs::Android,
            device_model: None,
            timestamp: ts,
            kind,
            payload,
        }
    }

    #[test]
    fn four_week_schedule_count() {
        assert_eq!(scheduled_count(&StudySchedule::four_week(START)), 9156);
    }

    #[test]
    fn empty_and_hourly_schedule() {
        assert_eq!(scheduled_count(&StudySchedule::empty()), 0);
        let s = StudySchedule::weekly(START, &[60.0]).unwrap();
        assert_eq!(scheduled_count(&s), 168);
    }

    #[test]
    fn fractional_total_rounds_half_up() {
        // 90 minutes at 60-minute interval is 1.5 scans.
        let s = StudySchedule::new(vec![ScheduleWeek {
            start: 0,
            end: 5400,
            interval_minutes: 60.0,
        }])
        .unwrap();
        assert_eq!(scheduled_scans_exact(&s), 1.5);
        assert_eq!(scheduled_count(&s), 2);
    }

    #[test]
    fn zero_and_full_completeness() {
        let s = StudySchedule::weekly(START, &[60.0]).unwrap();
        assert_eq!(completeness_pct(&[], &s, ScanKind::Gps).unwrap(), 0.0);
        let full: Vec<_> = (0..168).map(|i| ev(START + i * 3600, ScanKind::Gps)).collect();
        assert_eq!(completeness_pct(&full, &s, ScanKind::Gps).unwrap(), 100.0);
        assert!(completeness_pct(&full, &StudySchedule::empty(), ScanKind::Gps).is_err());
    }

    #[test]
    fn duplicates_and_out_of_window() {
        let s = StudySchedule::weekly(START, &[60.0]).unwrap();
        let evs = vec![
            ev(START, ScanKind::Gps),
            ev(START, ScanKind::Gps),
            ev(START - 10, ScanKind::Gps),
            ev(START + 7 * 86_400, ScanKind::Gps),
        ];
        let t = tally(&evs, &s, ScanKind::Gps);
        assert_eq!(t, KindTally { collected: 1, out_of_window: 2 });
    }

    #[test]
    fn modes_differ_when_streams_disagree() {
        let s = StudySchedule::weekly(START, &[60.0]).unwrap();
        let evs = vec![ev(START, ScanKind::Gps), ev(START + 3600, ScanKind::Bluetooth)];
        let mean = participant_completeness(&evs, &s, CompletenessMode::MeanOfKinds).unwrap();
        let cycles = participant_completeness(&evs, &s, CompletenessMode::ScanCycles).unwrap();
        assert!((mean.completeness_pct - 100.0 / 168.0).abs() < 1e-12);
        assert!((cycles.completeness_pct - 200.0 / 168.0).abs() < 1e-12);
    }

    fn row(os: DeviceOs, pct: f64) -> CompletenessRow {
        CompletenessRow {
            participant_id: "x".into(),
            os,
            model: None,
            scheduled: 100,
            collected: pct,
            bluetooth_collected: 0,
            gps_collected: 0,
            out_of_window: 0,
            completeness_pct: pct,
        }
    }

    #[test]
    fn by_os_mean_and_sd() {
        let s = completeness_by_os(&[row(DeviceOs::Android, 40.0), row(DeviceOs::Android, 60.0)]).unwrap();
        let g = &s.groups[&DeviceOs::Android];
        assert_eq!(g.mean, 50.0);
        assert!((g.sd.unwrap() - 14.142_135_623_730_951).abs() < 1e-12);
        assert!(s.t_test.is_none());

        let s = completeness_by_os(&[row(DeviceOs::Ios, 40.0)]).unwrap();
        assert_eq!(s.groups[&DeviceOs::Ios].sd, None);
        assert!(completeness_by_os(&[]).is_err());
    }

    #[test]
    fn by_os_t_test_present_with_two_per_group() {
        let rows = [
            row(DeviceOs::Android, 50.0),
            row(DeviceOs::Android, 60.0),
            row(DeviceOs::Ios, 40.0),
            row(DeviceOs::Ios, 45.0),
        ];
        let s = completeness_by_os(&rows).unwrap();
        let t = s.t_test.unwrap();
        assert_eq!(t.df, 2.0);
        assert!(t.t > 0.0);
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(offsets in proptest::collection::vec(0i64..7 * 24, 0..300), extra in 0i64..168) {
            let s = StudySchedule::weekly(START, &[60.0]).unwrap();
            let evs: Vec<_> = offsets.iter().map(|o| ev(START + o * 3600, ScanKind::Gps)).collect();
            let base = completeness_pct(&evs, &s, ScanKind::Gps).unwrap();
            let mut more = evs.clone();
            more.push(ev(START + extra * 3600 + 17, ScanKind::Gps));
            let after = completeness_pct(&more, &s, ScanKind::Gps).unwrap();
            prop_assert!(after >= base);
            prop_assert!((0.0..=100.0).contains(&base));
        }

        #[test]
        fn scheduled_count_is_additive(intervals in proptest::collection::vec(prop_oneof![Just(3.0), Just(4.0), Just(5.0), Just(8.0), Just(60.0)], 1..6)) {
            let whole = StudySchedule::weekly(START, &intervals).unwrap();
            let parts: u64 = (0..intervals.len())
                .map(|i| {
                    let s = StudySchedule::weekly(START + i as i64 * 7 * 86_400, &intervals[i..=i]).unwrap();
                    scheduled_count(&s)
                })
                .sum();
            prop_assert_eq!(scheduled_count(&whole), parts);
        }
    }
}
