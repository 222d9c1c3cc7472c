//! Per-UAV energy: rotor flight power, communication, decision, queue idle
//! and CMOS compute energy, with a ledger that keeps every component.

use serde::Serialize;

use crate::config::SimConfig;
use crate::radio::RadioParams;
use crate::tasking::PathRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub p_hover: f64,
    /// Air density, kg/m³.
    pub air_density: f64,
    pub drag_area: f64,
    pub drag_coeff: f64,
    /// Effective switched capacitance, J·s²/cycle³ with f in Hz.
    pub kappa: f64,
    pub p_cpu: f64,
    pub p_idle: f64,
}

impl EnergyParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let e = &cfg.energy;
        Self {
            p_hover: e.p_hover,
            air_density: e.air_density,
            drag_area: e.drag_area,
            drag_coeff: e.drag_coeff,
            kappa: cfg.kappa(),
            p_cpu: e.p_cpu,
            p_idle: e.p_idle,
        }
    }
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self::from_config(&SimConfig::default())
    }
}

/// Instantaneous flight power at `speed` m/s.
pub fn flight_power(speed: f64, p: &EnergyParams) -> f64 {
    p.p_hover + 0.5 * p.air_density * p.drag_area * p.drag_coeff * speed.powi(3)
}

/// Energy of a piecewise-constant speed trace of `(speed, duration)` segments.
pub fn trajectory_energy(trace: &[(f64, f64)], p: &EnergyParams) -> f64 {
    trace.iter().map(|&(v, dt)| flight_power(v, p) * dt).sum()
}

/// Dynamic CMOS energy for `cycles` at `freq` Hz.
pub fn compute_energy(freq: f64, cycles: f64, p: &EnergyParams) -> f64 {
    p.kappa * freq * freq * cycles
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Trajectory,
    Uplink,
    Decision,
    Forward,
    Process,
    Return,
    Downlink,
}

/// One energy charge against one UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Charge {
    pub uav: usize,
    pub component: Component,
    pub joules: f64,
}

/// Splits a completed task's energy across the UAVs on its path.
///
/// The serving UAV pays uplink reception and downlink transmission; every UAV
/// on the path pays its decision time; each forward/return hop charges
/// transmit power to the sender and receive power to the receiver; the
/// executing UAV pays idle power while queued plus compute energy.
pub fn task_energy(
    rec: &PathRecord,
    cycles: f64,
    exec_freq: f64,
    radio: &RadioParams,
    p: &EnergyParams,
) -> Vec<Charge> {
    let path = &rec.path;
    let serving = path[0];
    let exec = *path.last().expect("non-empty path");
    let mut out = Vec::with_capacity(4 + 2 * path.len() + 4 * rec.hop_forward.len());
    let mut push = |uav, component, joules| out.push(Charge { uav, component, joules });

    push(serving, Component::Uplink, radio.p_rx_uav * rec.t_uplink);
    for &k in path {
        push(k, Component::Decision, p.p_cpu * rec.decision_per_uav);
    }
    for (i, &t) in rec.hop_forward.iter().enumerate() {
        push(path[i], Component::Forward, radio.p_tx_uav * t);
        push(path[i + 1], Component::Forward, radio.p_rx_uav * t);
    }
    push(
        exec,
        Component::Process,
        p.p_idle * rec.t_queue + compute_energy(exec_freq, cycles, p),
    );
    // hop_return[i] is the transfer from path[i + 1] back to path[i]
    for (i, &t) in rec.hop_return.iter().enumerate() {
        push(path[i + 1], Component::Return, radio.p_tx_uav * t);
        push(path[i], Component::Return, radio.p_rx_uav * t);
    }
    push(serving, Component::Downlink, radio.p_tx_uav * rec.t_downlink);
    out
}

/// Running per-UAV energy account.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub uav: usize,
    pub e_trajectory: f64,
    pub e_uplink: f64,
    pub e_decision: f64,
    pub e_forward: f64,
    pub e_process: f64,
    pub e_return: f64,
    pub e_downlink: f64,
    pub e_total: f64,
}

impl EnergyLedger {
    pub fn new(uav: usize) -> Self {
        Self { uav, ..Self::default() }
    }

    pub fn debit(&mut self, component: Component, joules: f64) {
        debug_assert!(joules >= 0.0);
        let slot = match component {
            Component::Trajectory => &mut self.e_trajectory,
            Component::Uplink => &mut self.e_uplink,
            Component::Decision => &mut self.e_decision,
            Component::Forward => &mut self.e_forward,
            Component::Process => &mut self.e_process,
            Component::Return => &mut self.e_return,
            Component::Downlink => &mut self.e_downlink,
        };
        *slot += joules;
        self.e_total += joules;
    }

    pub fn component_sum(&self) -> f64 {
        self.e_trajectory
            + self.e_uplink
            + self.e_decision
            + self.e_forward
            + self.e_process
            + self.e_return
            + self.e_downlink
    }

    /// Relative gap between the running total and the component sum.
    pub fn closure_error(&self) -> f64 {
        let sum = self.component_sum();
        (self.e_total - sum).abs() / sum.abs().max(f64::MIN_POSITIVE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn flight_power_examples() {
        let p = EnergyParams::default();
        assert_eq!(flight_power(0.0, &p), 80.0);
        assert!(rel(flight_power(20.0, &p), 227.0) < 1e-12);
        assert!(rel(flight_power(10.0, &p), 98.375) < 1e-12);
    }

    #[test]
    fn trajectory_examples() {
        let p = EnergyParams::default();
        assert_eq!(trajectory_energy(&[(0.0, 10.0)], &p), 800.0);
        assert_eq!(trajectory_energy(&[], &p), 0.0);
        assert!(rel(trajectory_energy(&[(0.0, 5.0), (20.0, 5.0)], &p), 1535.0) < 1e-12);
    }

    #[test]
    fn compute_examples() {
        let p = EnergyParams { kappa: 1e-28, ..EnergyParams::default() };
        assert_eq!(compute_energy(2e9, 0.0, &p), 0.0);
        assert!(rel(compute_energy(2e9, 1e8, &p), 0.04) < 1e-12);
        assert!(rel(compute_energy(4e9, 1e8, &p), 4.0 * compute_energy(2e9, 1e8, &p)) < 1e-12);
    }

    fn record(path: Vec<usize>, fwd: Vec<f64>, ret: Vec<f64>) -> PathRecord {
        PathRecord {
            task_id: 0,
            t_uplink: 0.8,
            t_decision: 0.01 * path.len() as f64,
            decision_per_uav: 0.01,
            t_forward: fwd.iter().sum(),
            t_queue: 0.0,
            t_compute: 0.05,
            t_return: ret.iter().sum(),
            t_downlink: 0.1,
            t_total: 0.0,
            met_deadline: true,
            hop_forward: fwd,
            hop_return: ret,
            path,
        }
    }

    #[test]
    fn local_task_has_no_relay_energy() {
        let radio = RadioParams::default();
        let p = EnergyParams::default();
        let charges = task_energy(&record(vec![0], vec![], vec![]), 1e8, 2e9, &radio, &p);
        assert!(charges
            .iter()
            .all(|c| !matches!(c.component, Component::Forward | Component::Return)));
        let up: f64 = charges
            .iter()
            .filter(|c| c.component == Component::Uplink)
            .map(|c| c.joules)
            .sum();
        assert!(rel(up, 0.08) < 1e-12);
    }

    #[test]
    fn forward_hop_split() {
        let radio = RadioParams::default();
        let p = EnergyParams::default();
        let charges = task_energy(&record(vec![2, 5], vec![0.5], vec![0.0]), 1e8, 2e9, &radio, &p);
        let fwd = |uav| -> f64 {
            charges
                .iter()
                .filter(|c| c.component == Component::Forward && c.uav == uav)
                .map(|c| c.joules)
                .sum()
        };
        assert!(rel(fwd(2), 0.25) < 1e-12);
        assert!(rel(fwd(5), 0.05) < 1e-12);
        assert!(rel(fwd(2) + fwd(5), 0.3) < 1e-12);
    }

    #[test]
    fn ledger_closes() {
        let mut l = EnergyLedger::new(0);
        l.debit(Component::Trajectory, 80.0);
        l.debit(Component::Uplink, 0.08);
        l.debit(Component::Process, 0.04);
        assert!(l.closure_error() < 1e-12);
        assert!(rel(l.e_total, 80.12) < 1e-12);
    }
}
