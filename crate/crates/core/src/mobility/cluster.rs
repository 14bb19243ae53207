//! Adaptive K-means over stationary fixes: K grows from 1 until every point
//! lies within the radius bound of its center.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::LocalPlane;
use crate::error::{Error, Result};
use crate::model::GpsFix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterOptions {
    pub radius_threshold_m: f64,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            radius_threshold_m: 500.0,
            k_max: 50,
            restarts: 10,
            max_iterations: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSet {
    pub k: usize,
    /// Centers in the local plane, meters.
    pub centers: Vec<[f64; 2]>,
    /// Centers as `(latitude, longitude)`.
    pub centers_latlon: Vec<(f64, f64)>,
    /// Cluster index per input fix.
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Largest distance from any point to its assigned center.
    pub max_radius_m: f64,
    /// False when `k_max` was reached without meeting the radius bound.
    pub satisfied: bool,
    pub plane: LocalPlane,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<[f64; 2]>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn nearest(p: &[f64; 2], centers: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[idx];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
    }
    centers
}

/// One Lloyd run from k-means++ seeds.
fn lloyd(points: &[[f64; 2]], k: usize, max_iterations: usize, rng: &mut ChaCha8Rng) -> KMeansFit {
    let mut centers = seed_plus_plus(points, k, rng);
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..max_iterations {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(points) {
            let (j, _) = nearest(p, &centers);
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assignment.iter().zip(points) {
            sums[*a][0] += p[0];
            sums[*a][1] += p[1];
            counts[*a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
            } else {
                // Re-seed an empty cluster at the worst-served point.
                let far = points
                    .iter()
                    .enumerate()
                    .max_by(|(i, p), (l, q)| {
                        dist2(p, &centers[assignment[*i]])
                            .total_cmp(&dist2(q, &centers[assignment[*l]]))
                            .then(l.cmp(i))
                    })
                    .map(|(i, _)| i)
                    .expect("points non-empty");
                centers[j] = points[far];
                assignment[far] = j;
            }
        }
    }
    for (a, p) in assignment.iter_mut().zip(points) {
        *a = nearest(p, &centers).0;
    }
    let inertia = assignment.iter().zip(points).map(|(a, p)| dist2(p, &centers[*a])).sum();
    KMeansFit {
        centers,
        assignment,
        inertia,
    }
}

fn stream_seed(seed: u64, k: usize, restart: usize) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        .wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((restart as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Best of `restarts` k-means++ / Lloyd runs by inertia. Deterministic in
/// `seed`; restarts run in parallel and the earliest restart wins ties.
pub fn kmeans(points: &[[f64; 2]], k: usize, restarts: usize, max_iterations: usize, seed: u64) -> KMeansFit {
    assert!(k >= 1 && k <= points.len(), "k must be in 1..=n");
    let fits: Vec<KMeansFit> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, k, r));
            lloyd(points, k, max_iterations, &mut rng)
        })
        .collect();
    fits.into_iter()
        .reduce(|best, f| if f.inertia < best.inertia { f } else { best })
        .expect("at least one restart")
}

fn max_radius(points: &[[f64; 2]], fit: &KMeansFit) -> f64 {
    fit.assignment
        .iter()
        .zip(points)
        .map(|(a, p)| dist2(p, &fit.centers[*a]).sqrt())
        .fold(0.0, f64::max)
}

/// Smallest K whose clustering keeps every fix within the radius bound.
///
/// Fixes are projected onto a plane centered at their mean. If `k_max` is
/// reached first, the `k_max` solution is returned with `satisfied = false`.
pub fn cluster_stationary(fixes: &[GpsFix], opts: &ClusterOptions) -> Result<ClusterSet> {
    let plane = LocalPlane::centered_on(fixes)
        .ok_or_else(|| Error::InsufficientData("no stationary fixes to cluster".into()))?;
    let points: Vec<[f64; 2]> = fixes.iter().map(|f| plane.project(f.latitude, f.longitude)).collect();
    let k_limit = opts.k_max.max(1).min(points.len());

    let mut result = None;
    for k in 1..=k_limit {
        let fit = kmeans(&points, k, opts.restarts, opts.max_iterations, opts.seed);
        let radius = max_radius(&points, &fit);
        let satisfied = radius < opts.radius_threshold_m;
        result = Some((k, fit, radius, satisfied));
        if satisfied {
            break;
        }
    }
    let (k, fit, max_radius_m, satisfied) = result.expect("k_limit >= 1");
    let mut sizes = vec![0; k];
    for a in &fit.assignment {
        sizes[*a] += 1;
    }
    Ok(ClusterSet {
        k,
        centers_latlon: fit.centers.iter().map(|c| plane.unproject(*c)).collect(),
        centers: fit.centers,
        assignment: fit.assignment,
        sizes,
        max_radius_m,
        satisfied,
        plane,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn blob(plane: &LocalPlane, center: [f64; 2], radius: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<GpsFix> {
        (0..n)
            .map(|_| {
                let r = radius * rng.gen::<f64>().sqrt();
                let a = rng.gen::<f64>() * std::f64::consts::TAU;
                let (lat, lon) = plane.unproject([center[0] + r * a.cos(), center[1] + r * a.sin()]);
                GpsFix {
                    latitude: lat,
                    longitude: lon,
                    accuracy_m: None,
                }
            })
            .collect()
    }

    #[test]
    fn tight_points_form_one_cluster() {
        let plane = LocalPlane::new(-33.87, 151.21);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fixes = blob(&plane, [0.0, 0.0], 10.0, 100, &mut rng);
        let c = cluster_stationary(&fixes, &ClusterOptions::default()).unwrap();
        assert_eq!(c.k, 1);
        assert!(c.satisfied);
        assert_eq!(c.sizes, vec![100]);
    }

    #[test]
    fn two_distant_blobs() {
        let plane = LocalPlane::new(-33.87, 151.21);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut fixes = blob(&plane, [-1000.0, 0.0], 50.0, 60, &mut rng);
        fixes.extend(blob(&plane, [1000.0, 0.0], 50.0, 40, &mut rng));

        // Brute force: one center cannot cover both blobs within 500 m.
        let centroid = LocalPlane::centered_on(&fixes).unwrap();
        let pts: Vec<_> = fixes.iter().map(|f| centroid.project(f.latitude, f.longitude)).collect();
        let one = kmeans(&pts, 1, 1, 10, 0);
        assert!(max_radius(&pts, &one) >= 500.0);

        let c = cluster_stationary(&fixes, &ClusterOptions::default()).unwrap();
        assert_eq!(c.k, 2);
        let first = c.assignment[0];
        assert!(c.assignment[..60].iter().all(|a| *a == first));
        assert!(c.assignment[60..].iter().all(|a| *a != first));
        assert_eq!(c.sizes[first], 60);
    }

    #[test]
    fn k_max_reached_is_flagged() {
        let plane = LocalPlane::new(0.0, 0.0);
        let fixes: Vec<_> = (0..5)
            .map(|i| {
                let (lat, lon) = plane.unproject([i as f64 * 3000.0, 0.0]);
                GpsFix { latitude: lat, longitude: lon, accuracy_m: None }
            })
            .collect();
        let opts = ClusterOptions { k_max: 3, ..Default::default() };
        let c = cluster_stationary(&fixes, &opts).unwrap();
        assert_eq!(c.k, 3);
        assert!(!c.satisfied);
        assert!(c.max_radius_m >= 500.0);
    }

    #[test]
    fn no_fixes_is_an_error() {
        assert!(cluster_stationary(&[], &ClusterOptions::default()).is_err());
    }

    #[test]
    fn duplicate_points_terminate() {
        let fixes = vec![GpsFix { latitude: 1.0, longitude: 1.0, accuracy_m: None }; 20];
        let c = cluster_stationary(&fixes, &ClusterOptions::default()).unwrap();
        assert_eq!((c.k, c.max_radius_m), (1, 0.0));
    }

    #[test]
    fn deterministic_for_seed() {
        let plane = LocalPlane::new(-33.87, 151.21);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 900.0).unwrap();
        let fixes: Vec<_> = (0..300)
            .map(|_| {
                let (lat, lon) = plane.unproject([normal.sample(&mut rng), normal.sample(&mut rng)]);
                GpsFix { latitude: lat, longitude: lon, accuracy_m: None }
            })
            .collect();
        let opts = ClusterOptions { seed: 42, ..Default::default() };
        assert_eq!(cluster_stationary(&fixes, &opts).unwrap(), cluster_stationary(&fixes, &opts).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn radius_and_threshold_invariants(
            pts in proptest::collection::vec((-3000.0f64..3000.0, -3000.0f64..3000.0), 1..60),
            t1 in 100.0f64..1500.0,
            dt in 0.0f64..1500.0,
        ) {
            let plane = LocalPlane::new(-33.87, 151.21);
            let fixes: Vec<_> = pts.iter().map(|(x, y)| {
                let (lat, lon) = plane.unproject([*x, *y]);
                GpsFix { latitude: lat, longitude: lon, accuracy_m: None }
            }).collect();
            let small = ClusterOptions { radius_threshold_m: t1, restarts: 3, ..Default::default() };
            let large = ClusterOptions { radius_threshold_m: t1 + dt, ..small };
            let a = cluster_stationary(&fixes, &small).unwrap();
            let b = cluster_stationary(&fixes, &large).unwrap();
            prop_assert!(b.k <= a.k);
            prop_assert_eq!(a.assignment.len(), fixes.len());
            prop_assert!(a.assignment.iter().all(|j| *j < a.k));
            let recomputed = a.assignment.iter().zip(&fixes).map(|(j, f)| {
                let p = a.plane.project(f.latitude, f.longitude);
                dist2(&p, &a.centers[*j]).sqrt()
            }).fold(0.0, f64::max);
            prop_assert!((recomputed - a.max_radius_m).abs() < 1e-6);
            if a.satisfied { prop_assert!(a.max_radius_m < t1); }
        }
    }
}
