//! Lomb-Scargle periodogram and circadian movement.
//!
//! Times are in hours and frequencies in cycles per hour. The periodogram is
//! the classical variance-normalized form
//!
//! ```text
//! P(w) = 1/(2 s^2) * ( [sum y_j cos w(t_j - tau)]^2 / sum cos^2 w(t_j - tau)
//!                    + [sum y_j sin w(t_j - tau)]^2 / sum sin^2 w(t_j - tau) )
//! tan(2 w tau) = sum sin 2 w t_j / sum cos 2 w t_j
//! ```
//!
//! with `y` mean-removed and `s^2` the sample variance.

use std::f64::consts::TAU;

use serde::Serialize;

use super::TimedFix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Periodogram {
    pub power: Vec<f64>,
    /// Set when the series has zero variance; `power` is then all zero.
    pub degenerate: bool,
}

/// Evaluates the periodogram of `(times_h, values)` at each frequency in `freqs`.
pub fn lomb_scargle(times_h: &[f64], values: &[f64], freqs: &[f64]) -> Result<Periodogram> {
    let n = times_h.len();
    if n != values.len() {
        return Err(Error::InsufficientData(format!(
            "{} times but {} values",
            n,
            values.len()
        )));
    }
    if n < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 samples, got {n}")));
    }
    let t_mean = times_h.iter().sum::<f64>() / n as f64;
    let t: Vec<f64> = times_h.iter().map(|x| x - t_mean).collect();
    if t.iter().all(|x| *x == t[0]) {
        return Err(Error::InsufficientData("all samples share one timestamp".into()));
    }

    let y_mean = values.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = values.iter().map(|v| v - y_mean).collect();
    let var = y.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    let scale = y_mean.abs().max(values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let constant = values.iter().all(|v| *v == values[0]);
    if constant || !(var > (64.0 * f64::EPSILON * scale).powi(2)) {
        return Ok(Periodogram {
            power: vec![0.0; freqs.len()],
            degenerate: true,
        });
    }

    let power = freqs
        .iter()
        .map(|&f| {
            let w = TAU * f;
            let (mut s2, mut c2) = (0.0, 0.0);
            for tj in &t {
                let (s, c) = (2.0 * w * tj).sin_cos();
                s2 += s;
                c2 += c;
            }
            let tau = s2.atan2(c2) / (2.0 * w);
            let (mut yc, mut ys, mut cc, mut ss) = (0.0, 0.0, 0.0, 0.0);
            for (tj, yj) in t.iter().zip(&y) {
                let (s, c) = (w * (tj - tau)).sin_cos();
                yc += yj * c;
                ys += yj * s;
                cc += c * c;
                ss += s * s;
            }
            let floor = 1e-12 * n as f64;
            let mut p = 0.0;
            if cc > floor {
                p += yc * yc / cc;
            }
            if ss > floor {
                p += ys * ys / ss;
            }
            p / (2.0 * var)
        })
        .collect();
    Ok(Periodogram {
        power,
        degenerate: false,
    })
}

/// Frequencies from `1 / (2 span)` to `1 / min_period_h` in steps of
/// `1 / (oversampling * span)`.
pub fn frequency_grid(span_h: f64, min_period_h: f64, oversampling: f64) -> Vec<f64> {
    let f_min = 1.0 / (2.0 * span_h);
    let f_max = 1.0 / min_period_h;
    let step = 1.0 / (oversampling * span_h);
    let count = ((f_max - f_min) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| f_min + i as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircadianOptions {
    pub target_period_h: f64,
    /// Half-width of the period band around the target.
    pub band_half_width_h: f64,
    pub min_period_h: f64,
    pub oversampling: f64,
    /// Shortest window accepted.
    pub min_span_h: f64,
}

impl Default for CircadianOptions {
    fn default() -> Self {
        CircadianOptions {
            target_period_h: 24.0,
            band_half_width_h: 0.5,
            min_period_h: 2.0,
            oversampling: 4.0,
            min_span_h: 24.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult {
    pub frequencies: Vec<f64>,
    pub energy_latitude: Vec<f64>,
    pub energy_longitude: Vec<f64>,
    pub e24_latitude: f64,
    pub e24_longitude: f64,
    /// Natural log of the summed band energy; absent when that sum is zero.
    pub circadian_movement: Option<f64>,
    pub degenerate_latitude: bool,
    pub degenerate_longitude: bool,
    pub samples: usize,
    pub span_h: f64,
}

/// Circadian movement of one analysis window of fixes.
pub fn circadian_movement(fixes: &[TimedFix], opts: &CircadianOptions) -> Result<SpectralResult> {
    if fixes.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 fixes, got {}",
            fixes.len()
        )));
    }
    let t0 = fixes.iter().map(|f| f.timestamp).min().expect("non-empty");
    let t1 = fixes.iter().map(|f| f.timestamp).max().expect("non-empty");
    let span_h = (t1 - t0) as f64 / 3600.0;
    if span_h < opts.min_span_h {
        return Err(Error::InsufficientData(format!(
            "window spans {span_h:.2} h, need {} h",
            opts.min_span_h
        )));
    }
    let times: Vec<f64> = fixes.iter().map(|f| (f.timestamp - t0) as f64 / 3600.0).collect();
    let lat: Vec<f64> = fixes.iter().map(|f| f.fix.latitude).collect();
    let lon: Vec<f64> = fixes.iter().map(|f| f.fix.longitude).collect();

    let frequencies = frequency_grid(span_h, opts.min_period_h, opts.oversampling);
    let p_lat = lomb_scargle(&times, &lat, &frequencies)?;
    let p_lon = lomb_scargle(&times, &lon, &frequencies)?;

    let lo = opts.target_period_h - opts.band_half_width_h;
    let hi = opts.target_period_h + opts.band_half_width_h;
    let in_band: Vec<bool> = frequencies
        .iter()
        .map(|f| (lo..=hi).contains(&(1.0 / f)))
        .collect();
    let band = |p: &[f64]| -> f64 {
        p.iter().zip(&in_band).filter(|(_, b)| **b).map(|(v, _)| v).sum()
    };
    let e24_latitude = band(&p_lat.power);
    let e24_longitude = band(&p_lon.power);
    let total = e24_latitude + e24_longitude;
    Ok(SpectralResult {
        circadian_movement: (total > 0.0).then(|| total.ln()),
        frequencies,
        energy_latitude: p_lat.power,
        energy_longitude: p_lon.power,
        e24_latitude,
        e24_longitude,
        degenerate_latitude: p_lat.degenerate,
        degenerate_longitude: p_lon.degenerate,
        samples: fixes.len(),
        span_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GpsFix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent route: least-squares fit of a cos + b sin to the
    /// mean-removed series at each frequency; half the variance-normalized
    /// reduction in residual sum of squares equals the periodogram.
    fn ls_fit_power(t: &[f64], y: &[f64], f: f64) -> f64 {
        let n = y.len() as f64;
        let m = y.iter().sum::<f64>() / n;
        let yc: Vec<f64> = y.iter().map(|v| v - m).collect();
        let var = yc.iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
        let w = TAU * f;
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..y.len() {
            let (sj, cj) = (w * t[j]).sin_cos();
            a11 += cj * cj;
            a12 += cj * sj;
            a22 += sj * sj;
            b1 += cj * yc[j];
            b2 += sj * yc[j];
        }
        let det = a11 * a22 - a12 * a12;
        let alpha = (a22 * b1 - a12 * b2) / det;
        let beta = (a11 * b2 - a12 * b1) / det;
        (alpha * b1 + beta * b2) / (2.0 * var)
    }

    fn sinusoid(times: &[f64], period: f64) -> Vec<f64> {
        times.iter().map(|t| (TAU * t / period).sin()).collect()
    }

    #[test]
    fn constant_series_is_degenerate() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let p = lomb_scargle(&t, &vec![3.5; 50], &[0.1, 0.2]).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.power, vec![0.0, 0.0]);
    }

    #[test]
    fn too_few_samples_or_one_time() {
        assert!(lomb_scargle(&[0.0, 1.0], &[1.0, 2.0], &[0.1]).is_err());
        assert!(lomb_scargle(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0], &[0.1]).is_err());
    }

    #[test]
    fn daily_sinusoid_peaks_at_24h() {
        let t: Vec<f64> = (0..7 * 24 * 12).map(|i| i as f64 / 12.0).collect();
        let y = sinusoid(&t, 24.0);
        let grid = frequency_grid(t[t.len() - 1], 2.0, 4.0);
        let p = lomb_scargle(&t, &y, &grid).unwrap();
        let (imax, _) = p
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((1.0 / grid[imax] - 24.0).abs() < 0.5, "peak period {}", 1.0 / grid[imax]);
    }

    #[test]
    fn irregular_sampling_keeps_peak_and_matches_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t: Vec<f64> = (0..7 * 24 * 12)
            .map(|i| i as f64 / 12.0)
            .filter(|_| rng.gen::<f64>() >= 0.4)
            .collect();
        let y = sinusoid(&t, 24.0);
        let span = t[t.len() - 1] - t[0];
        let grid = frequency_grid(span, 2.0, 4.0);
        let p = lomb_scargle(&t, &y, &grid).unwrap();
        let best = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let oracle: Vec<f64> = grid.iter().map(|f| ls_fit_power(&t, &y, *f)).collect();
        assert_eq!(best(&p.power), best(&oracle));
        assert!((1.0 / grid[best(&p.power)] - 24.0).abs() < 0.5);
        for (a, b) in p.power.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn grid_contains_24h_for_a_week() {
        let g = frequency_grid(168.0, 2.0, 4.0);
        assert!((g[0] - 1.0 / 336.0).abs() < 1e-15);
        assert!(g.iter().any(|f| (1.0 / f - 24.0).abs() < 1e-9));
        assert!(*g.last().unwrap() <= 0.5 + 1e-12);
    }

    fn track(times_h: &[f64], lat: &[f64], lon: &[f64]) -> Vec<TimedFix> {
        times_h
            .iter()
            .zip(lat.iter().zip(lon))
            .map(|(t, (a, o))| TimedFix {
                timestamp: (t * 3600.0).round() as i64,
                fix: GpsFix { latitude: *a, longitude: *o, accuracy_m: None },
            })
            .collect()
    }

    #[test]
    fn stationary_participant_has_undefined_cm() {
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * 0.084).collect();
        let fixes = track(&t, &vec![-33.87; t.len()], &vec![151.21; t.len()]);
        let r = circadian_movement(&fixes, &CircadianOptions::default()).unwrap();
        assert_eq!(r.circadian_movement, None);
        assert!(r.degenerate_latitude && r.degenerate_longitude);
    }

    #[test]
    fn short_window_rejected() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let fixes = track(&t, &sinusoid(&t, 24.0), &sinusoid(&t, 24.0));
        assert!(circadian_movement(&fixes, &CircadianOptions::default()).is_err());
    }

    #[test]
    fn cm_grows_with_rhythm_amplitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t: Vec<f64> = (0..7 * 24 * 12).map(|i| i as f64 / 12.0).collect();
        let noise: Vec<(f64, f64)> = t
            .iter()
            .map(|_| (rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let deg = |m: f64| (m / super::super::EARTH_RADIUS_M).to_degrees();
        let cm = |amp_m: f64| {
            let lat: Vec<f64> = t
                .iter()
                .zip(&noise)
                .map(|(x, n)| -33.87 + deg(amp_m * (TAU * x / 24.0).sin() + 400.0 * n.0))
                .collect();
            let lon: Vec<f64> = t
                .iter()
                .zip(&noise)
                .map(|(x, n)| 151.21 + deg(amp_m * (TAU * x / 24.0).cos() + 400.0 * n.1))
                .collect();
            circadian_movement(&track(&t, &lat, &lon), &CircadianOptions::default())
                .unwrap()
                .circadian_movement
                .unwrap()
        };
        let (a, b, c) = (cm(100.0), cm(1000.0), cm(10_000.0));
        assert!(a < b && b < c, "{a} {b} {c}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn time_translation_invariance(shift in -1.0e4f64..1.0e4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.7 + rng.gen::<f64>() * 0.3).collect();
            let y: Vec<f64> = t.iter().map(|x| (TAU * x / 24.0).sin() + rng.gen::<f64>()).collect();
            let moved: Vec<f64> = t.iter().map(|x| x + shift).collect();
            let grid = frequency_grid(140.0, 2.0, 4.0);
            let a = lomb_scargle(&t, &y, &grid).unwrap();
            let b = lomb_scargle(&moved, &y, &grid).unwrap();
            for (u, v) in a.power.iter().zip(&b.power) {
                prop_assert!((u - v).abs() <= 1e-6 * u.abs().max(1e-2));
            }
        }

        #[test]
        fn cm_symmetric_in_coordinates(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t: Vec<f64> = (0..400).map(|i| i as f64 * 0.5).collect();
            let a: Vec<f64> = t.iter().map(|x| (TAU * x / 24.0).sin() * 0.01 + rng.gen::<f64>() * 0.001).collect();
            let b: Vec<f64> = t.iter().map(|_| rng.gen::<f64>() * 0.01).collect();
            let opts = CircadianOptions::default();
            let r1 = circadian_movement(&track(&t, &a, &b), &opts).unwrap();
            let r2 = circadian_movement(&track(&t, &b, &a), &opts).unwrap();
            prop_assert!((r1.circadian_movement.unwrap() - r2.circadian_movement.unwrap()).abs() < 1e-12);
        }
    }
}
