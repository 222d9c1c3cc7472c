//! Link budget: free-space path loss, RSSI, coverage and Shannon capacity.
//!
//! All quantities are linear SI units (W, Hz, m). Configuration carries dB
//! values which are converted exactly once.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    /// Air-to-ground gain at 1 m, linear.
    pub g0: f64,
    /// Air-to-air gain at 1 m, linear.
    pub g_inter: f64,
    /// Air-to-ground bandwidth, Hz.
    pub bandwidth: f64,
    /// Air-to-air bandwidth, Hz.
    pub bandwidth_inter: f64,
    /// Noise power, W.
    pub noise: f64,
    /// Coverage threshold, W.
    pub rssi_min: f64,
    /// Federated-exchange threshold, W.
    pub rssi_fl: f64,
    /// Inter-UAV range, m.
    pub r_comm: f64,
    pub p_tx_uav: f64,
    pub p_rx_uav: f64,
    pub p_tx_dev: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        crate::config::RadioConfig::default().linear()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Euclidean distance between two 3-D points.
pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Received power under inverse-square path loss.
pub fn rssi(p_tx: f64, gain: f64, d: f64) -> Result<f64> {
    if d <= 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    Ok(p_tx * gain / (d * d))
}

/// Coverage indicator; the threshold is inclusive.
pub fn covered(rssi: f64, threshold: f64) -> bool {
    rssi >= threshold
}

/// Shannon capacity in bit/s.
pub fn link_capacity(bandwidth: f64, signal: f64, interference: f64, noise: f64) -> f64 {
    bandwidth * (1.0 + signal / (noise + interference)).log2()
}

impl RadioParams {
    /// Device-to-UAV received power at distance `d`.
    pub fn uplink_rssi(&self, d: f64) -> Result<f64> {
        rssi(self.p_tx_dev, self.g0, d)
    }

    /// UAV-to-device received power, the quantity used for coverage and
    /// serving-UAV selection.
    pub fn downlink_rssi(&self, d: f64) -> Result<f64> {
        rssi(self.p_tx_uav, self.g0, d)
    }

    /// Air-to-air received power.
    pub fn inter_rssi(&self, d: f64) -> Result<f64> {
        rssi(self.p_tx_uav, self.g_inter, d)
    }

    /// Line-of-sight inter-UAV capacity (no interference).
    pub fn inter_capacity(&self, d: f64) -> Result<f64> {
        Ok(link_capacity(self.bandwidth_inter, self.inter_rssi(d)?, 0.0, self.noise))
    }

    /// Downlink capacity; single-association downlink, no interference.
    pub fn downlink_capacity(&self, d: f64) -> Result<f64> {
        Ok(link_capacity(self.bandwidth, self.downlink_rssi(d)?, 0.0, self.noise))
    }

    pub fn uplink_capacity(&self, d: f64, interference: f64) -> Result<f64> {
        Ok(link_capacity(self.bandwidth, self.uplink_rssi(d)?, interference, self.noise))
    }

    /// Inter-UAV links are usable up to `r_comm`, inclusive.
    pub fn connected(&self, d: f64) -> bool {
        d <= self.r_comm
    }
}

/// Sum of received uplink power at `rx` from every transmitting device other
/// than `tx_device`.
///
/// `transmitting` lists device indices with an uplink in progress during the
/// current step; `device_pos` gives ground positions (z = 0).
pub fn uplink_interference(
    radio: &RadioParams,
    rx: [f64; 3],
    device_pos: &[[f64; 2]],
    transmitting: &[usize],
    tx_device: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for &m in transmitting {
        if m == tx_device {
            continue;
        }
        let p = device_pos[m];
        total += radio.uplink_rssi(distance(rx, [p[0], p[1], 0.0]))?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance([0.0, 0.0, 100.0], [0.0, 0.0, 0.0]), 100.0);
        assert_eq!(distance([30.0, 40.0, 120.0], [0.0, 0.0, 0.0]), 130.0);
        assert_eq!(distance([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn rssi_examples() {
        let g0 = db_to_linear(-30.0);
        let r = rssi(0.5, g0, 100.0).unwrap();
        assert!(rel(r, 5e-8) < 1e-12);
        assert!((watts_to_dbm(r) - (-43.0103)).abs() < 1e-3);
        let r2 = rssi(0.5, g0, 200.0).unwrap();
        assert!(rel(r2, r / 4.0) < 1e-12);
        assert_eq!(rssi(0.0, g0, 100.0).unwrap(), 0.0);
        assert!(matches!(rssi(0.5, g0, 0.0), Err(Error::DegenerateGeometry)));
    }

    #[test]
    fn coverage_is_inclusive() {
        let t = dbm_to_watts(-90.0);
        assert!(covered(t, t));
        assert!(!covered(t * (1.0 - 1e-9), t));
        assert!(covered(5e-8, 1e-12));
        assert!(rel(t, 1e-12) < 1e-12);
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(link_capacity(1e7, 0.0, 0.0, 1e-13), 0.0);
        // signal / (noise + interference) = 3
        let c = link_capacity(1e7, 3.0, 0.5, 0.5);
        assert!(rel(c, 2e7) < 1e-12);
        let c2 = link_capacity(2e7, 3.0, 0.5, 0.5);
        assert!(rel(c2, 2.0 * c) < 1e-12);
    }

    #[test]
    fn interference_examples() {
        let radio = RadioParams { g0: 1e-3, p_tx_dev: 0.1, ..RadioParams::default() };
        let rx = [0.0, 0.0, 0.0];
        let devs = [[0.0, 10.0], [200.0, 0.0], [200.0, 0.0]];
        assert_eq!(uplink_interference(&radio, rx, &devs, &[0], 0).unwrap(), 0.0);
        let one = uplink_interference(&radio, rx, &devs, &[0, 1], 0).unwrap();
        assert!(rel(one, 2.5e-9) < 1e-12);
        let two = uplink_interference(&radio, rx, &devs, &[0, 1, 2], 0).unwrap();
        assert!(rel(two, 2.0 * one) < 1e-12);
    }

    #[test]
    fn defaults_match_linear_values() {
        let r = RadioParams::default();
        assert!(rel(r.g0, 1e-3) < 1e-12);
        assert!(rel(r.g_inter, 1e-2) < 1e-12);
        assert!(rel(r.rssi_min, 1e-12) < 1e-12);
        assert!(r.bandwidth_inter >= r.bandwidth);
    }

    proptest! {
        #[test]
        fn dbm_roundtrip(dbm in -150.0f64..50.0) {
            let w = dbm_to_watts(dbm);
            prop_assert!(rel(dbm_to_watts(watts_to_dbm(w)), w) < 1e-12);
        }

        #[test]
        fn rssi_strictly_decreasing(d in 1.0f64..5000.0, step in 1e-3f64..100.0) {
            prop_assert!(rssi(0.5, 1e-3, d + step).unwrap() < rssi(0.5, 1e-3, d).unwrap());
        }

        #[test]
        fn capacity_monotone(s in 1e-15f64..1e-6, i in 0.0f64..1e-6, ds in 1e-16f64..1e-6) {
            let n = 4e-15;
            prop_assert!(link_capacity(1e7, s + ds, i, n) > link_capacity(1e7, s, i, n));
            prop_assert!(link_capacity(1e7, s, i + ds, n) < link_capacity(1e7, s, i, n));
        }
    }
}
