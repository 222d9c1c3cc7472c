//! Seeded scenario generation: uniform devices, k-means UAV placement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::SimConfig;
use crate::sim::Scenario;

pub const LLOYD_ITERATIONS: usize = 50;

fn d2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Lloyd's k-means with k-means++ seeding. With more centres than points
/// the surplus centres duplicate randomly chosen points.
pub fn kmeans(points: &[[f64; 2]], k: usize, iterations: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    assert!(!points.is_empty() && k > 0);
    let distinct_k = k.min(points.len());
    let mut centres = vec![points[rng.random_range(0..points.len())]];
    while centres.len() < distinct_k {
        let weights: Vec<f64> =
            points.iter().map(|p| centres.iter().map(|c| d2(*p, *c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = weights.iter().sum();
        let next = if total == 0.0 {
            points[rng.random_range(0..points.len())]
        } else {
            let mut x = rng.random_range(0.0..total);
            let mut pick = points.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if x < *w {
                    pick = i;
                    break;
                }
                x -= w;
            }
            points[pick]
        };
        centres.push(next);
    }
    for _ in 0..iterations {
        let mut sum = vec![[0.0; 2]; centres.len()];
        let mut count = vec![0usize; centres.len()];
        for p in points {
            let mut best = 0;
            for c in 1..centres.len() {
                if d2(*p, centres[c]) < d2(*p, centres[best]) {
                    best = c;
                }
            }
            sum[best][0] += p[0];
            sum[best][1] += p[1];
            count[best] += 1;
        }
        for c in 0..centres.len() {
            if count[c] > 0 {
                centres[c] = [sum[c][0] / count[c] as f64, sum[c][1] / count[c] as f64];
            }
        }
    }
    while centres.len() < k {
        centres.push(points[rng.random_range(0..points.len())]);
    }
    centres
}

pub fn generate_scenario(cfg: &SimConfig, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce0_a210);
    let s = &cfg.sim;
    let range = |rng: &mut ChaCha8Rng, r: [f64; 2]| if r[0] == r[1] { r[0] } else { rng.random_range(r[0]..r[1]) };
    let device_loc: Vec<[f64; 2]> =
        (0..s.num_devices).map(|_| [rng.random_range(0.0..s.area), rng.random_range(0.0..s.area)]).collect();
    let device_rate = (0..s.num_devices).map(|_| range(&mut rng, cfg.tasks.rate)).collect();
    let uav_xy = kmeans(&device_loc, s.num_uavs, LLOYD_ITERATIONS, &mut rng);
    let altitude = (0..s.num_uavs).map(|_| range(&mut rng, s.altitude)).collect();
    let cpu_freq = (0..s.num_uavs).map(|_| range(&mut rng, s.cpu_freq)).collect();
    Scenario { device_loc, device_rate, uav_xy, altitude, cpu_freq }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_points_give_coincident_centres() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = kmeans(&[[3.0, 4.0]; 6], 3, 50, &mut rng);
        assert!(c.iter().all(|p| *p == [3.0, 4.0]));
    }

    #[test]
    fn single_centre_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = [[0.0, 0.0], [2.0, 0.0], [4.0, 6.0]];
        let c = kmeans(&pts, 1, 50, &mut rng);
        assert!((c[0][0] - 2.0).abs() < 1e-12 && (c[0][1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn surplus_centres_duplicate_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = [[0.0, 0.0], [10.0, 0.0]];
        let c = kmeans(&pts, 4, 50, &mut rng);
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|p| pts.contains(p)));
    }

    #[test]
    fn scenario_is_seeded() {
        let cfg = SimConfig::default();
        assert_eq!(generate_scenario(&cfg, 9), generate_scenario(&cfg, 9));
        assert_ne!(generate_scenario(&cfg, 9), generate_scenario(&cfg, 10));
        let s = generate_scenario(&cfg, 9);
        assert!(s.altitude.iter().all(|h| (80.0..150.0).contains(h)));
        assert!(s.device_rate.iter().all(|r| (0.3..0.8).contains(r)));
    }
}
