//! Battery cost of scanning: per-device discharge rates by scan rate and a
//! robust line through rate versus scans per hour.
//!
//! The model is linear in discharge rate (%/h), `rate = c0 + k * scans_per_hour`,
//! and battery life is `100 / rate`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ScanEvent, StudySchedule};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DischargeObservation {
    pub device_id: String,
    /// Index of the schedule week.
    pub week: usize,
    /// Scans per hour during the week.
    pub scan_rate: f64,
    /// Percent per hour, always positive.
    pub discharge_rate: f64,
    pub n_intervals: usize,
    pub hours: f64,
}

impl DischargeObservation {
    pub fn life_hours(&self) -> f64 {
        100.0 / self.discharge_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DischargeOptions {
    /// Sample pairs further apart than this are not used.
    pub max_gap_minutes: f64,
}

impl Default for DischargeOptions {
    fn default() -> Self {
        DischargeOptions {
            max_gap_minutes: 30.0,
        }
    }
}

/// Pools discharging intervals per schedule week for one device.
///
/// An interval is a pair of consecutive battery samples in the same week,
/// both not charging, no more than the gap apart, with non-increasing level.
/// Weeks without any level drop are omitted.
pub fn discharge_observations(
    events: &[ScanEvent],
    schedule: &StudySchedule,
    opts: &DischargeOptions,
) -> Vec<DischargeObservation> {
    let mut samples: Vec<(i64, f64, bool)> = events
        .iter()
        .filter_map(|e| e.battery().map(|b| (e.timestamp, b.level_pct, b.charging)))
        .collect();
    samples.sort_by_key(|s| s.0);
    let device_id = events.first().map(|e| e.participant_id.clone()).unwrap_or_default();

    let n_weeks = schedule.weeks().len();
    let mut drop = vec![0.0; n_weeks];
    let mut hours = vec![0.0; n_weeks];
    let mut count = vec![0usize; n_weeks];
    let max_gap_s = opts.max_gap_minutes * 60.0;
    for pair in samples.windows(2) {
        let ((t0, l0, c0), (t1, l1, c1)) = (pair[0], pair[1]);
        let dt = (t1 - t0) as f64;
        if c0 || c1 || dt <= 0.0 || dt > max_gap_s || l1 > l0 {
            continue;
        }
        let (Some(w0), Some(w1)) = (schedule.week_index(t0), schedule.week_index(t1)) else {
            continue;
        };
        if w0 != w1 {
            continue;
        }
        drop[w0] += l0 - l1;
        hours[w0] += dt / 3600.0;
        count[w0] += 1;
    }

    schedule
        .weeks()
        .iter()
        .enumerate()
        .filter(|(i, _)| count[*i] > 0 && drop[*i] > 0.0)
        .map(|(i, w)| DischargeObservation {
            device_id: device_id.clone(),
            week: i,
            scan_rate: w.scans_per_hour(),
            discharge_rate: drop[i] / hours[i],
            n_intervals: count[i],
            hours: hours[i],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    /// Bisquare tuning constant, in units of the robust residual scale.
    pub tuning: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            tuning: 4.685,
            tolerance: 1e-6,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryFit {
    /// Discharge rate with scanning off, %/h.
    pub intercept: f64,
    /// Extra %/h per scan/hour.
    pub slope: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when every robust weight vanished and ordinary least squares was used.
    pub ols_fallback: bool,
    /// Robust residual scale at the final iteration.
    pub scale: f64,
}

impl BatteryFit {
    pub fn rate_at(&self, scan_rate: f64) -> f64 {
        self.intercept + self.slope * scan_rate
    }
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return None;
    }
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((xi, yi), wi) in x.iter().zip(y).zip(w) {
        sxx += wi * (xi - xm) * (xi - xm);
        sxy += wi * (xi - xm) * (yi - ym);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some((ym - slope * xm, slope))
}

/// Ordinary least squares line, `(intercept, slope)`.
pub fn ols_line(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    weighted_line(x, y, &vec![1.0; x.len()])
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation scaled to be consistent for normal errors.
pub fn mad_scale(residuals: &[f64]) -> f64 {
    let mut r = residuals.to_vec();
    let m = median(&mut r);
    let mut dev: Vec<f64> = residuals.iter().map(|v| (v - m).abs()).collect();
    1.4826 * median(&mut dev)
}

pub fn bisquare_weight(residual: f64, cutoff: f64) -> f64 {
    let u = residual / cutoff;
    if u.abs() < 1.0 {
        let a = 1.0 - u * u;
        a * a
    } else {
        0.0
    }
}

/// Iteratively reweighted least squares with Tukey's bisquare weights,
/// starting from ordinary least squares.
pub fn irls_bisquare(x: &[f64], y: &[f64], opts: &IrlsOptions) -> Result<BatteryFit> {
    if x.len() != y.len() {
        return Err(Error::InsufficientData("x and y differ in length".into()));
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 distinct scan rates".into()));
    }
    let (ols_c, ols_k) = ols_line(x, y).expect("two distinct x values");
    // Keeps the cutoff positive when residuals vanish (exact fit).
    let scale_floor = 1e-12 * (1.0 + y.iter().map(|v| v.abs()).sum::<f64>() / y.len() as f64);

    let (mut c, mut k) = (ols_c, ols_k);
    let mut weights = vec![1.0; x.len()];
    let mut scale = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let residuals: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| yi - (c + k * xi)).collect();
        scale = mad_scale(&residuals).max(scale_floor);
        let cutoff = opts.tuning * scale;
        // Residuals are taken about their median so a contaminated OLS start,
        // which offsets every clean point, does not push them all past the cutoff.
        let center = median(&mut residuals.clone());
        let next: Vec<f64> = residuals
            .iter()
            .map(|r| bisquare_weight(r - center, cutoff))
            .collect();
        let delta = next
            .iter()
            .zip(&weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        weights = next;
        match weighted_line(x, y, &weights) {
            Some((c1, k1)) => {
                c = c1;
                k = k1;
            }
            None => {
                return Ok(BatteryFit {
                    intercept: ols_c,
                    slope: ols_k,
                    weights: vec![1.0; x.len()],
                    iterations,
                    converged: false,
                    ols_fallback: true,
                    scale,
                });
            }
        }
        if delta < opts.tolerance {
            converged = true;
            break;
        }
    }
    Ok(BatteryFit {
        intercept: c,
        slope: k,
        weights,
        iterations,
        converged,
        ols_fallback: false,
        scale,
    })
}

/// Robust fleet-level line through per-device, per-week observations.
pub fn fit_battery_model(observations: &[DischargeObservation], opts: &IrlsOptions) -> Result<BatteryFit> {
    let x: Vec<f64> = observations.iter().map(|o| o.scan_rate).collect();
    let y: Vec<f64> = observations.iter().map(|o| o.discharge_rate).collect();
    irls_bisquare(&x, &y, opts)
}

/// Hours from full to empty at `scan_rate` scans per hour.
pub fn predict_battery_life(fit: &BatteryFit, scan_rate: f64) -> Result<f64> {
    let rate = fit.rate_at(scan_rate);
    if !(rate > 0.0) {
        return Err(Error::NonPositiveRate(rate));
    }
    Ok(100.0 / rate)
}
