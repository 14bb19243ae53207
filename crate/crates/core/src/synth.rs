//! Deterministic synthetic scan logs with a ground-truth manifest.
//!
//! Every random draw comes from a counter-based generator keyed on
//! `(seed, participant, stream, index...)`, so the output for one participant
//! does not depend on how many other participants are generated, and a
//! participant's position at a given instant is a pure function of the key.
//!
//! The movement model: each participant has a home (cluster 0) and `K - 1`
//! other places. On a regular day they are home until 08:00, visit the other
//! places in turn until 20:00, then go home. Irregular days rotate that
//! template by a random phase. Fixes carry Gaussian noise and an optional
//! sinusoidal drift.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;

use chrono::FixedOffset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::LocalPlane;
use crate::model::{format_timestamp, DeviceOs, ScanKind, StudySchedule, Timestamp, SECONDS_PER_HOUR};
use crate::social::{default_tz, local_day, local_hour};

/// Radius bound used by the location clusterer.
const CLUSTER_RADIUS_RULE_M: f64 = 500.0;

const PHONE_CLASS: u32 = 0x5A020C;
const HEADSET_CLASS: u32 = 0x240404;

const ANDROID_MODELS: [&str; 4] = ["Samsung Galaxy S9", "Google Pixel 3", "Huawei P20", "Oppo R15"];
const IOS_MODELS: [&str; 4] = ["iPhone 7", "iPhone 8", "iPhone X", "iPhone XR"];

// Stream tags for the counter-based generator.
const S_OS: u64 = 1;
const S_MODEL: u64 = 2;
const S_HOME: u64 = 3;
const S_CENTERS: u64 = 4;
const S_K: u64 = 5;
const S_IRREGULAR_P: u64 = 6;
const S_DAY_IRREGULAR: u64 = 7;
const S_DAY_SHIFT: u64 = 8;
const S_VISIT: u64 = 9;
const S_GPS: u64 = 10;
const S_DELIVERY: u64 = 11;
const S_HOUSEHOLD: u64 = 12;
const S_COWORKER: u64 = 13;
const S_CROWD: u64 = 14;
const S_OTHER: u64 = 15;
const S_BATTERY: u64 = 16;
const S_MAC: u64 = 17;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_key(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C908, |h, p| splitmix(h ^ splitmix(*p)))
}

/// Uniform in `[0, 1)`.
fn unit(parts: &[u64]) -> f64 {
    (hash_key(parts) >> 11) as f64 / (1u64 << 53) as f64
}

fn normal(parts: &[u64]) -> f64 {
    let mut a = parts.to_vec();
    a.push(0);
    let u1 = unit(&a).max(f64::MIN_POSITIVE);
    *a.last_mut().expect("pushed") = 1;
    let u2 = unit(&a);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

fn poisson(mean: f64, parts: &[u64]) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let u = unit(parts);
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0;
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

fn mac_string(bits: u64) -> String {
    let b = bits.to_be_bytes();
    format!("{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[2], b[3], b[4], b[5], b[6], b[7])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterPlan {
    Fixed(usize),
    /// Uniform integer in `[min, max]` per participant.
    Range { min: usize, max: usize },
    PerParticipant(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_participants: usize,
    pub schedule: StudySchedule,
    pub tz: FixedOffset,
    /// Share of participants on iOS.
    pub ios_fraction: f64,
    pub delivery_android: f64,
    pub delivery_ios: f64,
    pub clusters: ClusterPlan,
    /// Require center separation above four times the 500 m cluster rule.
    pub well_separated: bool,
    pub cluster_separation_m: f64,
    /// Each visit sits at a uniform offset within this radius of the center.
    pub cluster_radius_m: f64,
    pub gps_noise_m: f64,
    pub routine_amplitude_m: f64,
    pub routine_period_h: f64,
    /// Per-participant probability of an irregular day is uniform in this range.
    pub irregular_day_prob: (f64, f64),
    /// Largest phase shift of an irregular day, hours.
    pub irregular_shift_h: f64,
    pub household_devices: usize,
    pub household_presence: f64,
    pub coworker_devices: usize,
    pub coworker_presence: f64,
    /// Mean strangers' phones per scan while away from home, 09:00-17:00.
    pub crowd_rate: f64,
    /// Mean non-phone devices (headsets etc.) per scan.
    pub non_phone_rate: f64,
    pub battery_c0: f64,
    pub battery_k: f64,
    /// Device intercepts are uniform in `c0 +- spread`.
    pub battery_c0_spread: f64,
    /// Per-interval rate jitter, uniform `+-` this many %/h.
    pub battery_rate_noise: f64,
    /// Local hours of the nightly charge, `[start, end)` wrapping midnight.
    pub charge_window: (u32, u32),
    pub charge_rate: f64,
    pub base_latitude: f64,
    pub base_longitude: f64,
    /// Homes are spread uniformly within this radius of the base.
    pub region_radius_m: f64,
}

/// 2019-03-04T00:00:00+10:00, a Monday.
pub const DEFAULT_START: Timestamp = 1_551_621_600;

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_participants: 20,
            schedule: StudySchedule::four_week(DEFAULT_START),
            tz: default_tz(),
            ios_fraction: 0.5,
            delivery_android: 0.55,
            delivery_ios: 0.45,
            clusters: ClusterPlan::Range { min: 4, max: 12 },
            well_separated: true,
            cluster_separation_m: 2500.0,
            cluster_radius_m: 30.0,
            gps_noise_m: 10.0,
            routine_amplitude_m: 0.0,
            routine_period_h: 24.0,
            irregular_day_prob: (0.0, 0.5),
            irregular_shift_h: 6.0,
            household_devices: 2,
            household_presence: 0.8,
            coworker_devices: 3,
            coworker_presence: 0.6,
            crowd_rate: 1.5,
            non_phone_rate: 0.5,
            battery_c0: 100.0 / 21.3,
            battery_k: (100.0 / 18.8 - 100.0 / 21.3) / 12.0,
            battery_c0_spread: 0.3,
            battery_rate_noise: 0.2,
            charge_window: (23, 7),
            charge_rate: 25.0,
            base_latitude: -33.87,
            base_longitude: 151.21,
            region_radius_m: 20_000.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InfeasibleConfig(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        prob("ios_fraction", self.ios_fraction)?;
        prob("delivery_android", self.delivery_android)?;
        prob("delivery_ios", self.delivery_ios)?;
        prob("household_presence", self.household_presence)?;
        prob("coworker_presence", self.coworker_presence)?;
        prob("irregular_day_prob.0", self.irregular_day_prob.0)?;
        prob("irregular_day_prob.1", self.irregular_day_prob.1)?;
        if self.irregular_day_prob.0 > self.irregular_day_prob.1 {
            return Err(Error::InfeasibleConfig("irregular_day_prob range is reversed".into()));
        }
        if self.cluster_radius_m >= self.cluster_separation_m / 2.0 {
            return Err(Error::InfeasibleConfig(format!(
                "cluster radius {} m must be below half the separation {} m",
                self.cluster_radius_m, self.cluster_separation_m
            )));
        }
        if self.well_separated && self.cluster_separation_m <= 4.0 * CLUSTER_RADIUS_RULE_M {
            return Err(Error::InfeasibleConfig(format!(
                "well-separated clusters need separation above {} m",
                4.0 * CLUSTER_RADIUS_RULE_M
            )));
        }
        if !(self.routine_period_h > 0.0) {
            return Err(Error::InfeasibleConfig("routine period must be positive".into()));
        }
        if self.charge_window.0 > 23 || self.charge_window.1 > 24 {
            return Err(Error::InfeasibleConfig("charge window hours out of range".into()));
        }
        let counts: Vec<usize> = match &self.clusters {
            ClusterPlan::Fixed(k) => vec![*k],
            ClusterPlan::Range { min, max } => {
                if min > max {
                    return Err(Error::InfeasibleConfig("cluster range is reversed".into()));
                }
                vec![*min, *max]
            }
            ClusterPlan::PerParticipant(v) => {
                if v.len() != self.n_participants {
                    return Err(Error::InfeasibleConfig(format!(
                        "{} cluster counts for {} participants",
                        v.len(),
                        self.n_participants
                    )));
                }
                v.clone()
            }
        };
        if counts.contains(&0) {
            return Err(Error::InfeasibleConfig("cluster count must be at least 1".into()));
        }
        Ok(())
    }

    fn cluster_count(&self, participant: usize) -> usize {
        match &self.clusters {
            ClusterPlan::Fixed(k) => *k,
            ClusterPlan::Range { min, max } => {
                let span = (max - min + 1) as f64;
                min + ((unit(&[self.seed, participant as u64, S_K]) * span) as usize).min(max - min)
            }
            ClusterPlan::PerParticipant(v) => v[participant],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterTruth {
    pub latitude: f64,
    pub longitude: f64,
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineTruth {
    pub period_h: f64,
    pub amplitude_m: f64,
    pub irregular_day_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryTruth {
    pub c0: f64,
    pub k: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KindCounts {
    pub bluetooth: u64,
    pub gps: u64,
    pub battery: u64,
}

impl KindCounts {
    pub fn get(&self, kind: ScanKind) -> u64 {
        match kind {
            ScanKind::Bluetooth => self.bluetooth,
            ScanKind::Gps => self.gps,
            ScanKind::Battery => self.battery,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTruth {
    pub participant_id: String,
    pub device_os: DeviceOs,
    pub device_model: String,
    pub delivery_probability: f64,
    pub cluster_count: usize,
    pub cluster_centers: Vec<CenterTruth>,
    pub routine: RoutineTruth,
    /// Raw MACs of household and coworker phones.
    pub known_device_macs: Vec<String>,
    pub battery: BatteryTruth,
    pub scheduled: KindCounts,
    pub emitted: KindCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthManifest {
    pub seed: u64,
    pub schedule: StudySchedule,
    pub tz_offset: String,
    /// Fleet-level battery model the device intercepts are drawn around.
    pub battery: BatteryTruth,
    pub participants: Vec<ParticipantTruth>,
}

/// Everything needed to replay one participant.
#[derive(Debug, Clone)]
pub struct ParticipantPlan {
    pub index: usize,
    pub participant_id: String,
    pub os: DeviceOs,
    pub model: String,
    pub plane: LocalPlane,
    /// Local-plane centers, home first.
    pub centers: Vec<[f64; 2]>,
    pub irregular_day_prob: f64,
    pub battery_c0: f64,
    household: Vec<u64>,
    coworkers: Vec<u64>,
    seed: u64,
    cfg: SynthConfigView,
}

#[derive(Debug, Clone, Copy)]
struct SynthConfigView {
    tz: FixedOffset,
    cluster_radius_m: f64,
    gps_noise_m: f64,
    routine_amplitude_m: f64,
    routine_period_h: f64,
    irregular_shift_h: f64,
}

impl ParticipantPlan {
    fn key(&self, stream: u64, rest: &[u64]) -> Vec<u64> {
        let mut k = vec![self.seed, self.index as u64, stream];
        k.extend_from_slice(rest);
        k
    }

    /// `(cluster, visit index)` occupied at `t`.
    pub fn place_at(&self, t: Timestamp) -> (usize, u64) {
        let tz = self.cfg.tz;
        let day = local_day(t, tz);
        let secs = (t + tz.local_minus_utc() as i64).rem_euclid(86_400) as f64;
        let mut hour = secs / 3600.0;
        let dkey = day as u64;
        if unit(&self.key(S_DAY_IRREGULAR, &[dkey])) < self.irregular_day_prob {
            let shift = (2.0 * unit(&self.key(S_DAY_SHIFT, &[dkey])) - 1.0) * self.cfg.irregular_shift_h;
            hour = (hour - shift).rem_euclid(24.0);
        }
        let k = self.centers.len();
        let (cluster, slot) = if k == 1 || !(8.0..20.0).contains(&hour) {
            (0, if hour < 8.0 { 0 } else { k as u64 })
        } else {
            let j = (((hour - 8.0) / 12.0) * (k - 1) as f64) as usize;
            let j = j.min(k - 2);
            (j + 1, j as u64 + 1)
        };
        (cluster, dkey.wrapping_mul(64).wrapping_add(slot))
    }

    /// Noise-free position in the local plane.
    pub fn true_position(&self, t: Timestamp) -> [f64; 2] {
        let (cluster, visit) = self.place_at(t);
        let c = self.centers[cluster];
        let r = self.cfg.cluster_radius_m * unit(&self.key(S_VISIT, &[visit, 0])).sqrt();
        let a = TAU * unit(&self.key(S_VISIT, &[visit, 1]));
        let mut p = [c[0] + r * a.cos(), c[1] + r * a.sin()];
        if self.cfg.routine_amplitude_m > 0.0 {
            let local_h = (t + self.cfg.tz.local_minus_utc() as i64) as f64 / 3600.0;
            let phase = TAU * local_h / self.cfg.routine_period_h;
            p[0] += self.cfg.routine_amplitude_m * phase.sin();
            p[1] += self.cfg.routine_amplitude_m * phase.cos();
        }
        p
    }

    /// Observed fix at `t`, including measurement noise.
    pub fn position_at(&self, t: Timestamp) -> (f64, f64) {
        let mut p = self.true_position(t);
        let tk = t as u64;
        p[0] += self.cfg.gps_noise_m * normal(&self.key(S_GPS, &[tk, 0]));
        p[1] += self.cfg.gps_noise_m * normal(&self.key(S_GPS, &[tk, 1]));
        self.plane.unproject(p)
    }

    pub fn known_device_macs(&self) -> Vec<String> {
        self.household.iter().chain(&self.coworkers).map(|m| mac_string(*m)).collect()
    }
}

/// Draws the per-participant layout: OS, places, routine and devices.
pub fn plan_participants(cfg: &SynthConfig) -> Result<Vec<ParticipantPlan>> {
    cfg.validate()?;
    let width = cfg.n_participants.to_string().len().max(2);
    (0..cfg.n_participants)
        .map(|i| {
            let pi = i as u64;
            let s = cfg.seed;
            let os = if unit(&[s, pi, S_OS]) < cfg.ios_fraction {
                DeviceOs::Ios
            } else {
                DeviceOs::Android
            };
            let models = match os {
                DeviceOs::Android => &ANDROID_MODELS,
                DeviceOs::Ios => &IOS_MODELS,
            };
            let model = models[(unit(&[s, pi, S_MODEL]) * models.len() as f64) as usize % models.len()];

            let base = LocalPlane::new(cfg.base_latitude, cfg.base_longitude);
            let r = cfg.region_radius_m * unit(&[s, pi, S_HOME, 0]).sqrt();
            let a = TAU * unit(&[s, pi, S_HOME, 1]);
            let (home_lat, home_lon) = base.unproject([r * a.cos(), r * a.sin()]);
            let plane = LocalPlane::new(home_lat, home_lon);

            let k = cfg.cluster_count(i);
            let spread = (cfg.cluster_separation_m * (k as f64).sqrt() * 1.5).max(5000.0);
            let mut centers = vec![[0.0, 0.0]];
            let mut attempt = 0u64;
            while centers.len() < k {
                if attempt > 100_000 {
                    return Err(Error::InfeasibleConfig(format!(
                        "could not place {k} separated clusters"
                    )));
                }
                let r = spread * unit(&[s, pi, S_CENTERS, attempt, 0]).sqrt();
                let a = TAU * unit(&[s, pi, S_CENTERS, attempt, 1]);
                attempt += 1;
                let c = [r * a.cos(), r * a.sin()];
                let ok = centers.iter().all(|o: &[f64; 2]| {
                    ((o[0] - c[0]).powi(2) + (o[1] - c[1]).powi(2)).sqrt() >= cfg.cluster_separation_m
                });
                if ok {
                    centers.push(c);
                }
            }

            let (lo, hi) = cfg.irregular_day_prob;
            let irregular_day_prob = lo + (hi - lo) * unit(&[s, pi, S_IRREGULAR_P]);
            let battery_c0 = cfg.battery_c0 + cfg.battery_c0_spread * (2.0 * unit(&[s, pi, S_BATTERY]) - 1.0);
            let mac = |role: u64, j: usize| hash_key(&[s, pi, S_MAC, role, j as u64]) & 0xFFFF_FFFF_FFFF;
            let coworkers = if k >= 2 { cfg.coworker_devices } else { 0 };
            Ok(ParticipantPlan {
                index: i,
                participant_id: format!("p{:0width$}", i + 1),
                os,
                model: model.to_string(),
                plane,
                centers,
                irregular_day_prob,
                battery_c0,
                household: (0..cfg.household_devices).map(|j| mac(0, j)).collect(),
                coworkers: (0..coworkers).map(|j| mac(1, j)).collect(),
                seed: s,
                cfg: SynthConfigView {
                    tz: cfg.tz,
                    cluster_radius_m: cfg.cluster_radius_m,
                    gps_noise_m: cfg.gps_noise_m,
                    routine_amplitude_m: cfg.routine_amplitude_m,
                    routine_period_h: cfg.routine_period_h,
                    irregular_shift_h: cfg.irregular_shift_h,
                },
            })
        })
        .collect()
}

/// Scheduled scan instants with their week index.
pub fn scan_times(schedule: &StudySchedule) -> Vec<(usize, Timestamp)> {
    let mut out = Vec::new();
    for (wi, w) in schedule.weeks().iter().enumerate() {
        let step = w.interval_minutes * 60.0;
        let mut i = 0u64;
        loop {
            let t = w.start + (i as f64 * step).round() as i64;
            if t >= w.end {
                break;
            }
            out.push((wi, t));
            i += 1;
        }
    }
    out
}

fn in_window(hour: usize, (start, end): (u32, u32)) -> bool {
    let h = hour as u32;
    if start <= end {
        (start..end).contains(&h)
    } else {
        h >= start || h < end
    }
}

#[derive(Serialize)]
struct Line<'a, P: Serialize> {
    participant_id: &'a str,
    device_os: DeviceOs,
    device_model: &'a str,
    timestamp: &'a str,
    kind: ScanKind,
    payload: P,
}

#[derive(Serialize)]
struct RawSighting {
    mac: String,
    class_of_device: u32,
}

#[derive(Serialize)]
struct BtPayload {
    sightings: Vec<RawSighting>,
}

#[derive(Serialize)]
struct GpsPayload {
    latitude: f64,
    longitude: f64,
    accuracy_m: f64,
}

#[derive(Serialize)]
struct BatteryPayload {
    level_pct: f64,
    charging: bool,
}

fn push_line<P: Serialize>(out: &mut String, line: &Line<'_, P>) {
    out.push_str(&serde_json::to_string(line).expect("plain data serializes"));
    out.push('\n');
}

fn generate_participant(cfg: &SynthConfig, plan: &ParticipantPlan, times: &[(usize, Timestamp)]) -> (String, ParticipantTruth) {
    let delivery = match plan.os {
        DeviceOs::Android => cfg.delivery_android,
        DeviceOs::Ios => cfg.delivery_ios,
    };
    let weeks = cfg.schedule.weeks();
    let mut out = String::new();
    let mut emitted = KindCounts::default();
    let mut level = 100.0f64;
    let mut prev_t: Option<Timestamp> = None;

    for (idx, &(wi, t)) in times.iter().enumerate() {
        let ik = idx as u64;
        let tk = t as u64;
        let hour = local_hour(t, cfg.tz);
        let charging = in_window(hour, cfg.charge_window);
        if let Some(p) = prev_t {
            let dt_h = (t - p) as f64 / SECONDS_PER_HOUR as f64;
            if charging {
                level = (level + cfg.charge_rate * dt_h).min(100.0);
            } else {
                let rate = plan.battery_c0
                    + cfg.battery_k * weeks[wi].scans_per_hour()
                    + cfg.battery_rate_noise * (2.0 * unit(&plan.key(S_BATTERY, &[tk])) - 1.0);
                level = (level - rate.max(0.0) * dt_h).max(0.0);
            }
        }
        prev_t = Some(t);

        if unit(&plan.key(S_DELIVERY, &[ik])) >= delivery {
            continue;
        }
        let ts = format_timestamp(t);
        macro_rules! line {
            ($kind:expr, $payload:expr) => {
                Line {
                    participant_id: &plan.participant_id,
                    device_os: plan.os,
                    device_model: &plan.model,
                    timestamp: &ts,
                    kind: $kind,
                    payload: $payload,
                }
            };
        }

        let (cluster, _) = plan.place_at(t);
        let mut sightings = Vec::new();
        if cluster == 0 {
            for (j, m) in plan.household.iter().enumerate() {
                if unit(&plan.key(S_HOUSEHOLD, &[tk, j as u64])) < cfg.household_presence {
                    sightings.push(RawSighting { mac: mac_string(*m), class_of_device: PHONE_CLASS });
                }
            }
        }
        if cluster == 1 {
            for (j, m) in plan.coworkers.iter().enumerate() {
                if unit(&plan.key(S_COWORKER, &[tk, j as u64])) < cfg.coworker_presence {
                    sightings.push(RawSighting { mac: mac_string(*m), class_of_device: PHONE_CLASS });
                }
            }
        }
        if cluster != 0 && (9..17).contains(&hour) {
            let n = poisson(cfg.crowd_rate, &plan.key(S_CROWD, &[tk]));
            for j in 0..n {
                let m = hash_key(&plan.key(S_CROWD, &[tk, j as u64 + 1])) & 0xFFFF_FFFF_FFFF;
                sightings.push(RawSighting { mac: mac_string(m), class_of_device: PHONE_CLASS });
            }
        }
        let n = poisson(cfg.non_phone_rate, &plan.key(S_OTHER, &[tk]));
        for j in 0..n {
            let m = hash_key(&plan.key(S_OTHER, &[tk, j as u64 + 1])) & 0xFFFF_FFFF_FFFF;
            sightings.push(RawSighting { mac: mac_string(m), class_of_device: HEADSET_CLASS });
        }
        push_line(&mut out, &line!(ScanKind::Bluetooth, BtPayload { sightings }));
        let (latitude, longitude) = plan.position_at(t);
        let gps = GpsPayload { latitude, longitude, accuracy_m: cfg.gps_noise_m };
        push_line(&mut out, &line!(ScanKind::Gps, gps));
        push_line(&mut out, &line!(ScanKind::Battery, BatteryPayload { level_pct: level, charging }));
        emitted.bluetooth += 1;
        emitted.gps += 1;
        emitted.battery += 1;
    }

    let n = times.len() as u64;
    let truth = ParticipantTruth {
        participant_id: plan.participant_id.clone(),
        device_os: plan.os,
        device_model: plan.model.clone(),
        delivery_probability: delivery,
        cluster_count: plan.centers.len(),
        cluster_centers: plan
            .centers
            .iter()
            .map(|c| {
                let (latitude, longitude) = plan.plane.unproject(*c);
                CenterTruth { latitude, longitude, x_m: c[0], y_m: c[1] }
            })
            .collect(),
        routine: RoutineTruth {
            period_h: cfg.routine_period_h,
            amplitude_m: cfg.routine_amplitude_m,
            irregular_day_probability: plan.irregular_day_prob,
        },
        known_device_macs: plan.known_device_macs(),
        battery: BatteryTruth { c0: plan.battery_c0, k: cfg.battery_k },
        scheduled: KindCounts { bluetooth: n, gps: n, battery: n },
        emitted,
    };
    (out, truth)
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// Ingest-schema JSONL, participants in id order.
    pub log: String,
    pub manifest: GroundTruthManifest,
}

impl SynthOutput {
    pub fn write_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.log.as_bytes())
    }
}

/// Generates the scan log and its manifest. Same config, same bytes.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    let plans = plan_participants(cfg)?;
    let times = scan_times(&cfg.schedule);
    let parts: Vec<(String, ParticipantTruth)> = plans
        .par_iter()
        .map(|p| generate_participant(cfg, p, &times))
        .collect();
    let mut log = String::with_capacity(parts.iter().map(|p| p.0.len()).sum());
    let mut participants = Vec::with_capacity(parts.len());
    for (text, truth) in parts {
        log.push_str(&text);
        participants.push(truth);
    }
    Ok(SynthOutput {
        log,
        manifest: GroundTruthManifest {
            seed: cfg.seed,
            schedule: cfg.schedule.clone(),
            tz_offset: crate::social::format_tz_offset(cfg.tz),
            battery: BatteryTruth { c0: cfg.battery_c0, k: cfg.battery_k },
            participants,
        },
    })
}

/// Emitted record counts per participant and kind, for round-trip checks.
pub fn emitted_counts(manifest: &GroundTruthManifest) -> BTreeMap<String, KindCounts> {
    manifest
        .participants
        .iter()
        .map(|p| (p.participant_id.clone(), p.emitted.clone()))
        .collect()
}
