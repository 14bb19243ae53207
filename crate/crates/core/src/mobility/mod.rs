//! GPS mobility features: movement-state labeling, location clusters and
//! circadian movement.

mod cluster;
mod spectral;

pub use cluster::{cluster_stationary, kmeans, ClusterOptions, ClusterSet, KMeansFit};
pub use spectral::{
    circadian_movement, frequency_grid, lomb_scargle, CircadianOptions, Periodogram, SpectralResult,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GpsFix, ScanEvent, Timestamp};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters.
pub fn haversine_m(a: &GpsFix, b: &GpsFix) -> f64 {
    let (p1, p2) = (a.latitude.to_radians(), b.latitude.to_radians());
    let dp = p2 - p1;
    let dl = (b.longitude - a.longitude).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection onto a tangent plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalPlane {
    pub origin_latitude: f64,
    pub origin_longitude: f64,
    cos_lat: f64,
}

impl LocalPlane {
    pub fn new(origin_latitude: f64, origin_longitude: f64) -> Self {
        LocalPlane {
            origin_latitude,
            origin_longitude,
            cos_lat: origin_latitude.to_radians().cos(),
        }
    }

    /// Origin at the mean of the fixes.
    pub fn centered_on(fixes: &[GpsFix]) -> Option<Self> {
        if fixes.is_empty() {
            return None;
        }
        let n = fixes.len() as f64;
        let lat = fixes.iter().map(|f| f.latitude).sum::<f64>() / n;
        let lon = fixes.iter().map(|f| f.longitude).sum::<f64>() / n;
        Some(Self::new(lat, lon))
    }

    pub fn project(&self, latitude: f64, longitude: f64) -> [f64; 2] {
        [
            EARTH_RADIUS_M * (longitude - self.origin_longitude).to_radians() * self.cos_lat,
            EARTH_RADIUS_M * (latitude - self.origin_latitude).to_radians(),
        ]
    }

    /// Returns `(latitude, longitude)`.
    pub fn unproject(&self, p: [f64; 2]) -> (f64, f64) {
        let lat = self.origin_latitude + (p[1] / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin_longitude + (p[0] / (EARTH_RADIUS_M * self.cos_lat)).to_degrees();
        (lat, lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionState {
    Stationary,
    Transition,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimedFix {
    pub timestamp: Timestamp,
    pub fix: GpsFix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabeledFix {
    pub timestamp: Timestamp,
    pub fix: GpsFix,
    pub speed_kmh: Option<f64>,
    pub state: MotionState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedOptions {
    pub threshold_kmh: f64,
    pub max_gap_minutes: f64,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        SpeedOptions {
            threshold_kmh: 1.0,
            max_gap_minutes: 30.0,
        }
    }
}

/// GPS fixes of one participant, sorted, with repeated timestamps collapsed
/// to their first occurrence.
pub fn gps_track(events: &[ScanEvent]) -> Vec<TimedFix> {
    let mut track: Vec<TimedFix> = events
        .iter()
        .filter_map(|e| {
            e.gps().map(|fix| TimedFix {
                timestamp: e.timestamp,
                fix: *fix,
            })
        })
        .collect();
    track.sort_by_key(|f| f.timestamp);
    track.dedup_by_key(|f| f.timestamp);
    track
}

/// Speed from the previous fix and a stationary/transition label.
///
/// The first fix and any fix whose preceding gap exceeds the maximum are
/// unlabeled.
pub fn estimate_speeds(fixes: &[TimedFix], opts: &SpeedOptions) -> Result<Vec<LabeledFix>> {
    if let Some(i) = fixes.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(Error::Unsorted(i + 1));
    }
    let max_gap_s = opts.max_gap_minutes * 60.0;
    Ok(fixes
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let prev = i.checked_sub(1).map(|j| &fixes[j]);
            let (speed_kmh, state) = match prev {
                Some(p) if ((f.timestamp - p.timestamp) as f64) <= max_gap_s => {
                    let hours = (f.timestamp - p.timestamp) as f64 / 3600.0;
                    let v = haversine_m(&p.fix, &f.fix) / 1000.0 / hours;
                    let state = if v < opts.threshold_kmh {
                        MotionState::Stationary
                    } else {
                        MotionState::Transition
                    };
                    (Some(v), state)
                }
                _ => (None, MotionState::Unlabeled),
            };
            LabeledFix {
                timestamp: f.timestamp,
                fix: f.fix,
                speed_kmh,
                state,
            }
        })
        .collect())
}
