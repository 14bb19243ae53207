//! End-to-end analysis of a parsed scan log: one JSON document plus the
//! plot-ready CSV tables.

use std::collections::BTreeMap;

use chrono::FixedOffset;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::battery::{
    discharge_observations, fit_battery_model, predict_battery_life, BatteryFit, DischargeObservation, DischargeOptions,
    IrlsOptions,
};
use crate::completeness::{completeness_by_os, participant_completeness, scheduled_count, CompletenessMode, CompletenessRow, OsSummary};
use crate::error::{Error, Result};
use crate::mobility::{
    circadian_movement, cluster_stationary, estimate_speeds, gps_track, CircadianOptions, ClusterOptions, MotionState,
    SpeedOptions, TimedFix,
};
use crate::model::{ParticipantFeatures, ScanEvent, StudySchedule};
use crate::social::{classify_devices, format_tz_offset, social_profile, study_days, DayBasis, HourRow, DEFAULT_MIN_DAYS};
use crate::stats::{cronbach_alpha, rm_anova, CronbachAlpha, RepeatedMeasures, RmAnova, SphericityCorrection};

/// JSON Schema for the `report` document.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// Scan rates at which battery life is tabulated.
pub const LIFE_SCAN_RATES: [f64; 5] = [0.0, 7.5, 12.0, 15.0, 20.0];

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub schedule: StudySchedule,
    pub tz: FixedOffset,
    pub completeness_mode: CompletenessMode,
    pub min_known_days: usize,
    pub speed: SpeedOptions,
    pub cluster: ClusterOptions,
    pub circadian: CircadianOptions,
    /// Restrict the circadian series to stationary fixes.
    pub cm_stationary_only: bool,
    pub discharge: DischargeOptions,
    pub irls: IrlsOptions,
}

impl ReportOptions {
    pub fn new(schedule: StudySchedule, tz: FixedOffset) -> Self {
        ReportOptions {
            schedule,
            tz,
            completeness_mode: CompletenessMode::default(),
            min_known_days: DEFAULT_MIN_DAYS,
            speed: SpeedOptions::default(),
            cluster: ClusterOptions::default(),
            circadian: CircadianOptions::default(),
            cm_stationary_only: false,
            discharge: DischargeOptions::default(),
            irls: IrlsOptions::default(),
        }
    }
}

/// Events grouped by participant id, each group in input order.
pub fn group_by_participant(events: &[ScanEvent]) -> Groups {
    let mut out: BTreeMap<String, Vec<ScanEvent>> = BTreeMap::new();
    for e in events {
        out.entry(e.participant_id.clone()).or_default().push(e.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleSummary {
    pub weeks: StudySchedule,
    pub scheduled_per_participant: u64,
    pub study_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletenessSection {
    pub mode: CompletenessMode,
    pub rows: Vec<CompletenessRow>,
    pub by_os: Option<OsSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantSocial {
    pub participant_id: String,
    pub known_devices: usize,
    pub unknown_devices: usize,
    pub hours: Vec<HourRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SocialSection {
    pub min_known_days: usize,
    pub denominator_days: u32,
    /// Per-hour means averaged over participants.
    pub hours: Vec<HourRow>,
    pub participants: Vec<ParticipantSocial>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterRow {
    pub cluster_id: usize,
    pub center_lat: f64,
    pub center_lon: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeekCm {
    pub week: usize,
    pub interval_minutes: f64,
    pub samples: usize,
    pub circadian_movement: Option<f64>,
    /// Why the value is missing, when it is.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantMobility {
    pub participant_id: String,
    pub fixes: usize,
    pub stationary: usize,
    pub transition: usize,
    pub unlabeled: usize,
    pub cluster_count: Option<usize>,
    pub clusters_satisfied: Option<bool>,
    pub max_radius_m: Option<f64>,
    pub clusters: Vec<ClusterRow>,
    pub weeks: Vec<WeekCm>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmReliability {
    /// Participants with a defined value in every week.
    pub n: usize,
    pub weeks: usize,
    pub alpha: Option<CronbachAlpha>,
    pub anova: Option<RmAnova>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MobilitySection {
    pub participants: Vec<ParticipantMobility>,
    pub cm_reliability: CmReliability,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifeRow {
    pub scan_rate: f64,
    pub discharge_rate: f64,
    pub life_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub intercept: f64,
    pub slope: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ols_fallback: bool,
    pub scale: f64,
}

impl From<&BatteryFit> for FitSummary {
    fn from(f: &BatteryFit) -> Self {
        FitSummary {
            intercept: f.intercept,
            slope: f.slope,
            iterations: f.iterations,
            converged: f.converged,
            ols_fallback: f.ols_fallback,
            scale: f.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatterySection {
    pub observations: Vec<DischargeObservation>,
    pub fit: Option<FitSummary>,
    pub lives: Vec<LifeRow>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tz_offset: String,
    pub participants: usize,
    pub schedule: ScheduleSummary,
    pub completeness: CompletenessSection,
    pub social: SocialSection,
    pub mobility: MobilitySection,
    pub battery: BatterySection,
}

fn participant_mobility(id: &str, events: &[ScanEvent], opts: &ReportOptions) -> ParticipantMobility {
    let track = gps_track(events);
    let labeled = estimate_speeds(&track, &opts.speed).expect("gps_track is strictly increasing");
    let count = |s: MotionState| labeled.iter().filter(|f| f.state == s).count();
    let stationary: Vec<_> = labeled
        .iter()
        .filter(|f| f.state == MotionState::Stationary)
        .collect();
    let stationary_fixes: Vec<_> = stationary.iter().map(|f| f.fix).collect();

    let clusters = (!stationary_fixes.is_empty())
        .then(|| cluster_stationary(&stationary_fixes, &opts.cluster).ok())
        .flatten();

    let series: Vec<TimedFix> = if opts.cm_stationary_only {
        stationary
            .iter()
            .map(|f| TimedFix { timestamp: f.timestamp, fix: f.fix })
            .collect()
    } else {
        track.clone()
    };
    let weeks = opts
        .schedule
        .weeks()
        .iter()
        .enumerate()
        .map(|(week, w)| {
            let window: Vec<TimedFix> = series.iter().copied().filter(|f| w.contains(f.timestamp)).collect();
            let (cm, note) = match circadian_movement(&window, &opts.circadian) {
                Ok(r) => {
                    let note = r.circadian_movement.is_none().then(|| "zero energy in the 24 h band".to_string());
                    (r.circadian_movement, note)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            WeekCm {
                week,
                interval_minutes: w.interval_minutes,
                samples: window.len(),
                circadian_movement: cm,
                note,
            }
        })
        .collect();

    ParticipantMobility {
        participant_id: id.to_string(),
        fixes: track.len(),
        stationary: count(MotionState::Stationary),
        transition: count(MotionState::Transition),
        unlabeled: count(MotionState::Unlabeled),
        cluster_count: clusters.as_ref().map(|c| c.k),
        clusters_satisfied: clusters.as_ref().map(|c| c.satisfied),
        max_radius_m: clusters.as_ref().map(|c| c.max_radius_m),
        clusters: clusters
            .map(|c| {
                c.centers_latlon
                    .iter()
                    .zip(&c.sizes)
                    .enumerate()
                    .map(|(i, ((lat, lon), n))| ClusterRow {
                        cluster_id: i,
                        center_lat: *lat,
                        center_lon: *lon,
                        n_points: *n,
                    })
                    .collect()
            })
            .unwrap_or_default(),
        weeks,
    }
}

fn participant_social(id: &str, events: &[ScanEvent], opts: &ReportOptions, days: u32) -> ParticipantSocial {
    let partition = classify_devices(events, opts.min_known_days, opts.tz);
    let profile = social_profile(events, &partition, opts.tz, DayBasis::StudyDays(days));
    ParticipantSocial {
        participant_id: id.to_string(),
        known_devices: partition.known.len(),
        unknown_devices: partition.unknown.len(),
        hours: profile.rows,
    }
}

fn cm_reliability(participants: &[ParticipantMobility], weeks: usize) -> CmReliability {
    let rows: Vec<Vec<Option<f64>>> = participants
        .iter()
        .map(|p| p.weeks.iter().map(|w| w.circadian_movement).collect())
        .collect();
    let complete = rows.iter().filter(|r| r.iter().all(Option::is_some)).count();
    let m = RepeatedMeasures::from_incomplete(&rows).ok();
    CmReliability {
        n: complete,
        weeks,
        alpha: m.as_ref().and_then(|m| cronbach_alpha(m, Some(0.95)).ok()),
        anova: m
            .as_ref()
            .and_then(|m| rm_anova(m, SphericityCorrection::GreenhouseGeisser).ok()),
    }
}

/// Participants keyed and ordered by id.
pub type Groups = BTreeMap<String, Vec<ScanEvent>>;

fn per_participant<T: Send>(groups: &Groups, f: impl Fn(&str, &[ScanEvent]) -> T + Sync) -> Vec<T> {
    let items: Vec<(&String, &Vec<ScanEvent>)> = groups.iter().collect();
    items.par_iter().map(|(id, evs)| f(id, evs)).collect()
}

pub fn completeness_section(groups: &Groups, opts: &ReportOptions) -> CompletenessSection {
    let rows: Vec<CompletenessRow> =
        per_participant(groups, |_, evs| participant_completeness(evs, &opts.schedule, opts.completeness_mode).ok())
            .into_iter()
            .flatten()
            .collect();
    CompletenessSection {
        mode: opts.completeness_mode,
        by_os: completeness_by_os(&rows).ok(),
        rows,
    }
}

pub fn social_section(groups: &Groups, opts: &ReportOptions) -> SocialSection {
    let days = study_days(&opts.schedule, opts.tz);
    let participants = per_participant(groups, |id, evs| participant_social(id, evs, opts, days));
    let n = participants.len();
    let hours = (0..24)
        .map(|hour| {
            let avg = |f: fn(&HourRow) -> f64| {
                if n == 0 {
                    0.0
                } else {
                    participants.iter().map(|p| f(&p.hours[hour])).sum::<f64>() / n as f64
                }
            };
            HourRow {
                hour,
                mean_known: avg(|r| r.mean_known),
                mean_unknown: avg(|r| r.mean_unknown),
            }
        })
        .collect();
    SocialSection {
        min_known_days: opts.min_known_days,
        denominator_days: days,
        hours,
        participants,
    }
}

pub fn mobility_section(groups: &Groups, opts: &ReportOptions) -> MobilitySection {
    let participants = per_participant(groups, |id, evs| participant_mobility(id, evs, opts));
    MobilitySection {
        cm_reliability: cm_reliability(&participants, opts.schedule.weeks().len()),
        participants,
    }
}

pub fn battery_section(groups: &Groups, opts: &ReportOptions) -> BatterySection {
    let observations: Vec<DischargeObservation> =
        per_participant(groups, |_, evs| discharge_observations(evs, &opts.schedule, &opts.discharge))
            .into_iter()
            .flatten()
            .collect();
    match fit_battery_model(&observations, &opts.irls) {
        Ok(fit) => BatterySection {
            lives: LIFE_SCAN_RATES
                .iter()
                .map(|r| LifeRow {
                    scan_rate: *r,
                    discharge_rate: fit.rate_at(*r),
                    life_h: predict_battery_life(&fit, *r).ok(),
                })
                .collect(),
            fit: Some(FitSummary::from(&fit)),
            observations,
            note: None,
        },
        Err(e) => BatterySection {
            observations,
            fit: None,
            lives: Vec::new(),
            note: Some(e.to_string()),
        },
    }
}

/// Runs every analysis. Participant work is parallel; assembly follows
/// participant id order.
pub fn build_report(events: &[ScanEvent], opts: &ReportOptions) -> Result<Report> {
    if opts.schedule.is_empty() {
        return Err(Error::EmptySchedule);
    }
    let groups = group_by_participant(events);
    Ok(Report {
        tz_offset: format_tz_offset(opts.tz),
        participants: groups.len(),
        schedule: ScheduleSummary {
            weeks: opts.schedule.clone(),
            scheduled_per_participant: scheduled_count(&opts.schedule),
            study_days: study_days(&opts.schedule, opts.tz),
        },
        completeness: completeness_section(&groups, opts),
        social: social_section(&groups, opts),
        mobility: mobility_section(&groups, opts),
        battery: battery_section(&groups, opts),
    })
}

impl Report {
    /// Per-participant feature records.
    pub fn features(&self) -> Vec<ParticipantFeatures> {
        self.social
            .participants
            .iter()
            .zip(&self.mobility.participants)
            .map(|(s, m)| {
                let mut social_profile = [[0.0; 2]; 24];
                for r in &s.hours {
                    social_profile[r.hour] = [r.mean_known, r.mean_unknown];
                }
                let obs: Vec<_> = self
                    .battery
                    .observations
                    .iter()
                    .filter(|o| o.device_id == s.participant_id)
                    .cloned()
                    .collect();
                ParticipantFeatures {
                    participant_id: s.participant_id.clone(),
                    completeness_pct: self
                        .completeness
                        .rows
                        .iter()
                        .find(|r| r.participant_id == s.participant_id)
                        .map_or(0.0, |r| r.completeness_pct),
                    social_profile,
                    cluster_count: m.cluster_count,
                    circadian_movement_by_week: m.weeks.iter().map(|w| (w.week, w.circadian_movement)).collect(),
                    battery: (!obs.is_empty()).then_some(obs),
                }
            })
            .collect()
    }
}

/// Rounds to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                *v = serde_json::Number::from_f64(round_sig6(x)).map_or(Value::Null, Value::Number);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serializes with sorted keys and floats at 6 significant digits.
pub fn to_stable_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report types serialize");
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

fn fmt_num(x: f64) -> String {
    round_sig6(x).to_string()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn completeness_csv(rows: &[CompletenessRow]) -> String {
    csv_string(
        &[
            "participant_id",
            "os",
            "model",
            "scheduled",
            "collected",
            "bluetooth_collected",
            "gps_collected",
            "out_of_window",
            "completeness_pct",
        ],
        rows.iter().map(|r| {
            vec![
                r.participant_id.clone(),
                r.os.to_string(),
                r.model.clone().unwrap_or_default(),
                r.scheduled.to_string(),
                fmt_num(r.collected),
                r.bluetooth_collected.to_string(),
                r.gps_collected.to_string(),
                r.out_of_window.to_string(),
                fmt_num(r.completeness_pct),
            ]
        }),
    )
}

pub fn social_csv(hours: &[HourRow]) -> String {
    csv_string(
        &["hour", "mean_known", "mean_unknown"],
        hours
            .iter()
            .map(|r| vec![r.hour.to_string(), fmt_num(r.mean_known), fmt_num(r.mean_unknown)]),
    )
}

pub fn clusters_csv(participants: &[ParticipantMobility]) -> String {
    csv_string(
        &["participant_id", "cluster_id", "center_lat", "center_lon", "n_points"],
        participants.iter().flat_map(|p| {
            p.clusters.iter().map(move |c| {
                vec![
                    p.participant_id.clone(),
                    c.cluster_id.to_string(),
                    fmt_num(c.center_lat),
                    fmt_num(c.center_lon),
                    c.n_points.to_string(),
                ]
            })
        }),
    )
}

pub fn cm_csv(participants: &[ParticipantMobility]) -> String {
    csv_string(
        &["participant", "week", "interval_minutes", "cm"],
        participants.iter().flat_map(|p| {
            p.weeks.iter().map(move |w| {
                vec![
                    p.participant_id.clone(),
                    w.week.to_string(),
                    fmt_num(w.interval_minutes),
                    fmt_opt(w.circadian_movement),
                ]
            })
        }),
    )
}

pub fn battery_csv(section: &BatterySection) -> String {
    csv_string(
        &["device_id", "week", "scan_rate", "discharge_rate", "life_h", "n_intervals", "hours"],
        section.observations.iter().map(|o| {
            vec![
                o.device_id.clone(),
                o.week.to_string(),
                fmt_num(o.scan_rate),
                fmt_num(o.discharge_rate),
                fmt_num(o.life_hours()),
                o.n_intervals.to_string(),
                fmt_num(o.hours),
            ]
        }),
    )
}

pub fn battery_lives_csv(section: &BatterySection) -> String {
    csv_string(
        &["scan_rate", "discharge_rate", "life_h"],
        section
            .lives
            .iter()
            .map(|l| vec![fmt_num(l.scan_rate), fmt_num(l.discharge_rate), fmt_opt(l.life_h)]),
    )
}
