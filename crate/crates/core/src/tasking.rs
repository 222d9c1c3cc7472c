//! Task lifecycle: serving-UAV selection, path timing, compute queues and a
//! brute-force path oracle.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::radio::{self, RadioParams};

pub const BITS_PER_BYTE: f64 = 8.0;

/// A computational task. Sizes are stored in base units (cycles, bytes).
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: u64,
    pub origin: usize,
    pub cycles: f64,
    pub in_bytes: f64,
    pub out_bytes: f64,
    /// Relative deadline, s.
    pub deadline: f64,
    pub created_at: f64,
}

impl Task {
    pub fn in_bits(&self) -> f64 {
        self.in_bytes * BITS_PER_BYTE
    }

    pub fn out_bits(&self) -> f64 {
        self.out_bytes * BITS_PER_BYTE
    }
}

/// End-to-end timing of one task along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub task_id: u64,
    pub path: Vec<usize>,
    pub t_uplink: f64,
    pub t_decision: f64,
    pub decision_per_uav: f64,
    pub t_forward: f64,
    pub t_queue: f64,
    pub t_compute: f64,
    pub t_return: f64,
    pub t_downlink: f64,
    pub t_total: f64,
    pub met_deadline: bool,
    /// `hop_forward[i]`: transfer of the input from `path[i]` to `path[i + 1]`.
    pub hop_forward: Vec<f64>,
    /// `hop_return[i]`: transfer of the result from `path[i + 1]` to `path[i]`.
    pub hop_return: Vec<f64>,
}

impl PathRecord {
    pub fn hops(&self) -> usize {
        self.path.len()
    }

    pub fn t_process(&self) -> f64 {
        self.t_queue + self.t_compute
    }

    pub fn t_path(&self) -> f64 {
        self.t_decision + self.t_forward + self.t_queue + self.t_compute + self.t_return
    }

    pub fn executor(&self) -> usize {
        *self.path.last().expect("non-empty path")
    }

    /// Deadline overshoot, s (zero when met).
    pub fn overshoot(&self, deadline: f64) -> f64 {
        (self.t_total - deadline).max(0.0)
    }
}

/// FIFO of `(task_id, remaining_cycles)` owned by one UAV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComputeQueue {
    pub owner: usize,
    entries: VecDeque<(u64, f64)>,
    load: f64,
}

impl ComputeQueue {
    pub fn new(owner: usize) -> Self {
        Self { owner, entries: VecDeque::new(), load: 0.0 }
    }

    /// Queued cycles.
    pub fn load(&self) -> f64 {
        self.load
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, task_id: u64, cycles: f64) {
        self.entries.push_back((task_id, cycles));
        self.load += cycles;
    }

    /// Runs `budget` cycles through the queue, returning ids that finished.
    pub fn drain(&mut self, mut budget: f64) -> Vec<u64> {
        let mut done = Vec::new();
        while budget > 0.0 {
            let Some(front) = self.entries.front_mut() else { break };
            if front.1 <= budget {
                budget -= front.1;
                done.push(front.0);
                self.entries.pop_front();
            } else {
                front.1 -= budget;
                budget = 0.0;
            }
        }
        self.load = self.entries.iter().map(|e| e.1).sum();
        done
    }

    pub fn clear(&mut self) -> Vec<u64> {
        self.load = 0.0;
        self.entries.drain(..).map(|e| e.0).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &(u64, f64)> {
        self.entries.iter()
    }
}

/// Queuing delay of a newly enqueued task.
pub fn queue_delay(q: &ComputeQueue, cpu_freq: f64) -> f64 {
    q.entries.iter().map(|e| e.1).sum::<f64>() / cpu_freq
}

/// Frozen view of everything path timing depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSnapshot {
    pub radio: RadioParams,
    pub uav_pos: Vec<[f64; 3]>,
    pub cpu_freq: Vec<f64>,
    /// Queued cycles per UAV.
    pub load: Vec<f64>,
    pub active: Vec<bool>,
    pub device_pos: Vec<[f64; 2]>,
    /// Devices with an uplink in progress this step.
    pub transmitting: Vec<usize>,
    pub decision_time: f64,
    pub load_max: f64,
}

impl NetworkSnapshot {
    pub fn num_uavs(&self) -> usize {
        self.uav_pos.len()
    }

    fn device3(&self, m: usize) -> [f64; 3] {
        let p = self.device_pos[m];
        [p[0], p[1], 0.0]
    }

    pub fn device_distance(&self, uav: usize, m: usize) -> f64 {
        radio::distance(self.uav_pos[uav], self.device3(m))
    }

    pub fn uav_distance(&self, a: usize, b: usize) -> f64 {
        radio::distance(self.uav_pos[a], self.uav_pos[b])
    }

    pub fn covers(&self, uav: usize, m: usize) -> bool {
        self.active[uav]
            && self
                .radio
                .downlink_rssi(self.device_distance(uav, m))
                .map(|r| radio::covered(r, self.radio.rssi_min))
                .unwrap_or(true)
    }

    pub fn linked(&self, a: usize, b: usize) -> bool {
        a != b && self.active[a] && self.active[b] && self.radio.connected(self.uav_distance(a, b))
    }

    pub fn has_capacity(&self, uav: usize, cycles: f64) -> bool {
        self.load[uav] + cycles <= self.load_max
    }

    pub fn uplink_rate(&self, uav: usize, m: usize) -> Result<f64> {
        let interference = radio::uplink_interference(
            &self.radio,
            self.uav_pos[uav],
            &self.device_pos,
            &self.transmitting,
            m,
        )?;
        self.radio.uplink_capacity(self.device_distance(uav, m), interference)
    }
}

/// Strongest-signal UAV for `device`; ties go to the lowest index.
pub fn select_serving_uav(device: usize, snap: &NetworkSnapshot) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in 0..snap.num_uavs() {
        if !snap.active[k] {
            continue;
        }
        let d = snap.device_distance(k, device);
        let r = snap.radio.downlink_rssi(d)?;
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((k, r));
        }
    }
    match best {
        Some((k, r)) if radio::covered(r, snap.radio.rssi_min) => Ok(k),
        _ => Err(Error::NoCoverage { device }),
    }
}

/// Checks the hard path constraints: coverage of the first hop, simple
/// path, connectivity between consecutive hops and executor capacity.
pub fn check_path(task: &Task, path: &[usize], snap: &NetworkSnapshot) -> Result<()> {
    let fail = |reason: &str| {
        Err(Error::InfeasiblePath { path: path.to_vec(), reason: reason.to_string() })
    };
    if path.is_empty() {
        return fail("empty path");
    }
    if path.iter().any(|&k| k >= snap.num_uavs() || !snap.active[k]) {
        return fail("inactive or unknown UAV");
    }
    for (i, a) in path.iter().enumerate() {
        if path[i + 1..].contains(a) {
            return fail("path revisits a UAV");
        }
    }
    if !snap.covers(path[0], task.origin) {
        return fail("first hop does not cover the origin device");
    }
    if let Some(w) = path.windows(2).find(|w| !snap.linked(w[0], w[1])) {
        return Err(Error::InfeasiblePath {
            path: path.to_vec(),
            reason: format!("UAVs {} and {} are out of range", w[0], w[1]),
        });
    }
    if !snap.has_capacity(*path.last().unwrap(), task.cycles) {
        return fail("executor queue would exceed capacity");
    }
    Ok(())
}

/// Full timing decomposition of `task` along `path` on a frozen snapshot.
pub fn execute_path(task: &Task, path: &[usize], snap: &NetworkSnapshot) -> Result<PathRecord> {
    check_path(task, path, snap)?;
    let serving = path[0];
    let exec = *path.last().unwrap();

    let t_uplink = task.in_bits() / snap.uplink_rate(serving, task.origin)?;
    let t_decision = path.len() as f64 * snap.decision_time;
    let mut hop_forward = Vec::with_capacity(path.len() - 1);
    let mut hop_return = Vec::with_capacity(path.len() - 1);
    for w in path.windows(2) {
        let rate = snap.radio.inter_capacity(snap.uav_distance(w[0], w[1]))?;
        hop_forward.push(task.in_bits() / rate);
        let back = snap.radio.inter_capacity(snap.uav_distance(w[1], w[0]))?;
        hop_return.push(task.out_bits() / back);
    }
    let t_forward: f64 = hop_forward.iter().sum();
    let t_return: f64 = hop_return.iter().sum();
    let t_queue = snap.load[exec] / snap.cpu_freq[exec];
    let t_compute = task.cycles / snap.cpu_freq[exec];
    let t_downlink =
        task.out_bits() / snap.radio.downlink_capacity(snap.device_distance(serving, task.origin))?;

    let t_total = t_uplink + (t_decision + t_forward + t_queue + t_compute + t_return) + t_downlink;
    Ok(PathRecord {
        task_id: task.id,
        path: path.to_vec(),
        t_uplink,
        t_decision,
        decision_per_uav: snap.decision_time,
        t_forward,
        t_queue,
        t_compute,
        t_return,
        t_downlink,
        t_total,
        met_deadline: t_total <= task.deadline,
        hop_forward,
        hop_return,
    })
}

/// Maps an offloading slot to a UAV: slot 0 is the decider itself, slot `i`
/// the `i`-th other UAV in ascending index order.
pub fn slot_to_uav(decider: usize, slot: usize) -> usize {
    if slot == 0 {
        decider
    } else if slot - 1 < decider {
        slot - 1
    } else {
        slot
    }
}

pub fn uav_to_slot(decider: usize, uav: usize) -> usize {
    if uav == decider {
        0
    } else if uav < decider {
        uav + 1
    } else {
        uav
    }
}

/// Feasibility of each offloading slot for `decider`, given the UAVs already
/// on the path (`visited`, ending with `decider`).
pub fn offload_mask(
    decider: usize,
    task: &Task,
    visited: &[usize],
    max_hops: usize,
    snap: &NetworkSnapshot,
) -> Vec<bool> {
    let k = snap.num_uavs();
    let can_extend = visited.len() < max_hops;
    (0..k)
        .map(|slot| {
            let u = slot_to_uav(decider, slot);
            if slot == 0 {
                snap.has_capacity(u, task.cycles)
            } else {
                can_extend
                    && !visited.contains(&u)
                    && snap.linked(decider, u)
                    && snap.has_capacity(u, task.cycles)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Oracle. Everything below recomputes link budgets and timing composition
// independently of `execute_path`.
// ---------------------------------------------------------------------------

fn oracle_rx_power(p_tx: f64, gain: f64, a: [f64; 3], b: [f64; 3]) -> f64 {
    let d2 = (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
    p_tx * gain / d2
}

fn oracle_rate(bandwidth: f64, sinr: f64) -> f64 {
    bandwidth * (sinr.ln_1p() / std::f64::consts::LN_2)
}

/// Total completion time of `task` on `path`, computed from scratch.
pub fn oracle_path_time(task: &Task, path: &[usize], snap: &NetworkSnapshot) -> f64 {
    let r = &snap.radio;
    let dev = [snap.device_pos[task.origin][0], snap.device_pos[task.origin][1], 0.0];
    let first = snap.uav_pos[path[0]];
    let last = *path.last().unwrap();
    let bits_in = task.in_bytes * 8.0;
    let bits_out = task.out_bytes * 8.0;

    let noise_plus_interf = r.noise
        + snap
            .transmitting
            .iter()
            .filter(|&&m| m != task.origin)
            .map(|&m| {
                let p = snap.device_pos[m];
                oracle_rx_power(r.p_tx_dev, r.g0, first, [p[0], p[1], 0.0])
            })
            .sum::<f64>();
    let up = oracle_rate(r.bandwidth, oracle_rx_power(r.p_tx_dev, r.g0, dev, first) / noise_plus_interf);
    let down = oracle_rate(r.bandwidth, oracle_rx_power(r.p_tx_uav, r.g0, first, dev) / r.noise);

    // Per-link cost of carrying the input out and the result back.
    let relay: f64 = path
        .windows(2)
        .map(|w| {
            let rate = oracle_rate(
                r.bandwidth_inter,
                oracle_rx_power(r.p_tx_uav, r.g_inter, snap.uav_pos[w[0]], snap.uav_pos[w[1]]) / r.noise,
            );
            (bits_in + bits_out) / rate
        })
        .sum();

    let f = snap.cpu_freq[last];
    bits_in / up
        + bits_out / down
        + snap.decision_time * path.len() as f64
        + relay
        + (snap.load[last] + task.cycles) / f
}

fn oracle_feasible_extension(snap: &NetworkSnapshot, from: usize, to: usize, cycles: f64) -> bool {
    // Forwarding to a UAV that could not queue the task is not allowed.
    if to == from || !snap.active[to] || snap.load[to] + cycles > snap.load_max {
        return false;
    }
    let a = snap.uav_pos[from];
    let b = snap.uav_pos[to];
    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    d <= snap.radio.r_comm
}

/// Every feasible simple path from the serving UAV with at most `max_hops`
/// UAVs, paired with its oracle completion time, in lexicographic order.
pub fn oracle_enumerate(
    task: &Task,
    snap: &NetworkSnapshot,
    max_hops: usize,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let serving = select_serving_uav(task.origin, snap)?;
    let mut out = Vec::new();
    let mut stack = vec![vec![serving]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if snap.load[last] + task.cycles <= snap.load_max {
            out.push((path.clone(), oracle_path_time(task, &path, snap)));
        }
        if path.len() < max_hops {
            for next in (0..snap.num_uavs()).rev() {
                if !path.contains(&next) && oracle_feasible_extension(snap, last, next, task.cycles) {
                    let mut p = path.clone();
                    p.push(next);
                    stack.push(p);
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Minimum-time feasible path; ties go to the lexicographically smallest.
pub fn oracle_best_path(
    task: &Task,
    snap: &NetworkSnapshot,
    max_hops: usize,
) -> Result<(Vec<usize>, f64)> {
    let all = oracle_enumerate(task, snap, max_hops)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for (p, t) in all {
        if best.as_ref().is_none_or(|(_, bt)| t < *bt) {
            best = Some((p, t));
        }
    }
    best.ok_or(Error::NoFeasiblePath { task: task.id })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn snapshot(uavs: &[[f64; 3]], freq: &[f64], load: &[f64]) -> NetworkSnapshot {
        NetworkSnapshot {
            radio: RadioParams::default(),
            uav_pos: uavs.to_vec(),
            cpu_freq: freq.to_vec(),
            load: load.to_vec(),
            active: vec![true; uavs.len()],
            device_pos: vec![[0.0, 0.0], [300.0, 0.0]],
            transmitting: vec![0, 1],
            decision_time: 0.01,
            load_max: 1e9,
        }
    }

    fn task(cycles: f64) -> Task {
        Task {
            id: 7,
            origin: 0,
            cycles,
            in_bytes: 2e6,
            out_bytes: 0.3e6,
            deadline: 10.0,
            created_at: 0.0,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn serving_uav_selection() {
        let s = snapshot(&[[0.0, 0.0, 100.0]], &[1e9], &[0.0]);
        assert_eq!(select_serving_uav(0, &s).unwrap(), 0);
        // distances 130 and 100
        let s = snapshot(&[[30.0, 40.0, 120.0], [0.0, 0.0, 100.0]], &[1e9; 2], &[0.0; 2]);
        assert_eq!(select_serving_uav(0, &s).unwrap(), 1);
        let s = snapshot(&[[0.0, 50.0, 100.0], [0.0, -50.0, 100.0]], &[1e9; 2], &[0.0; 2]);
        assert_eq!(select_serving_uav(0, &s).unwrap(), 0);
    }

    #[test]
    fn no_coverage_is_an_error() {
        let mut s = snapshot(&[[0.0, 0.0, 100.0]], &[1e9], &[0.0]);
        s.radio.rssi_min = 1.0;
        assert!(matches!(select_serving_uav(0, &s), Err(Error::NoCoverage { device: 0 })));
        s.radio.rssi_min = 1e-12;
        s.active[0] = false;
        assert!(select_serving_uav(0, &s).is_err());
    }

    #[test]
    fn queue_delay_examples() {
        let mut q = ComputeQueue::new(0);
        assert_eq!(queue_delay(&q, 2e9), 0.0);
        q.push(1, 100e6);
        assert!(rel(queue_delay(&q, 2e9), 0.05) < 1e-12);
        q.push(2, 300e6);
        assert!(rel(queue_delay(&q, 2e9), 0.2) < 1e-12);
        assert_eq!(q.load(), 400e6);
    }

    #[test]
    fn queue_drains_fifo() {
        let mut q = ComputeQueue::new(0);
        q.push(1, 100.0);
        q.push(2, 300.0);
        assert_eq!(q.drain(150.0), vec![1]);
        assert_eq!(q.load(), 250.0);
        assert_eq!(q.drain(1000.0), vec![2]);
        assert!(q.is_empty());
    }

    #[test]
    fn local_path_has_empty_relay_sums() {
        let s = snapshot(&[[0.0, 0.0, 100.0]], &[2e9], &[0.0]);
        let rec = execute_path(&task(100e6), &[0], &s).unwrap();
        assert_eq!(rec.t_forward, 0.0);
        assert_eq!(rec.t_return, 0.0);
        assert_eq!(rec.hops(), 1);
        let sum = rec.t_uplink + rec.t_path() + rec.t_downlink;
        assert_eq!(rec.t_total, sum);
    }

    #[test]
    fn uplink_time_from_rate() {
        // 2 MB at 20 Mbit/s is 0.8 s; construct a link with SINR 3 at 10 MHz.
        let mut s = snapshot(&[[0.0, 0.0, 100.0]], &[2e9], &[0.0]);
        s.transmitting = vec![0];
        let signal = s.radio.uplink_rssi(100.0).unwrap();
        s.radio.noise = signal / 3.0;
        let rec = execute_path(&task(100e6), &[0], &s).unwrap();
        assert!(rel(rec.t_uplink, 0.8) < 1e-12);
    }

    #[test]
    fn infeasible_paths_rejected() {
        let s = snapshot(&[[0.0, 0.0, 100.0], [900.0, 0.0, 100.0]], &[1e9; 2], &[0.0; 2]);
        assert!(execute_path(&task(1e8), &[0, 1], &s).is_err());
        assert!(execute_path(&task(1e8), &[], &s).is_err());
        let s = snapshot(&[[0.0, 0.0, 100.0], [100.0, 0.0, 100.0]], &[1e9; 2], &[0.0, 9.5e8]);
        assert!(execute_path(&task(1e8), &[0, 1], &s).is_err());
        assert!(execute_path(&task(1e8), &[0, 1, 0], &s).is_err());
        assert!(execute_path(&task(1e8), &[0], &s).is_ok());
    }

    #[test]
    fn oracle_prefers_idle_fast_neighbour() {
        // UAV 0: 1 GHz with 200 Mcycles queued; UAV 1: 3 GHz, idle.
        let s = snapshot(&[[0.0, 0.0, 100.0], [100.0, 0.0, 100.0]], &[1e9, 3e9], &[200e6, 0.0]);
        let t = task(100e6);
        let local = execute_path(&t, &[0], &s).unwrap();
        let remote = execute_path(&t, &[0, 1], &s).unwrap();
        assert!(rel(local.t_process(), 0.3) < 1e-12);
        assert!(remote.t_process() < 0.034);
        let (best, time) = oracle_best_path(&t, &s, 3).unwrap();
        assert_eq!(best, vec![0, 1]);
        assert!(rel(time, remote.t_total) < 1e-9);
    }

    #[test]
    fn oracle_single_uav_and_local_win() {
        let s = snapshot(&[[0.0, 0.0, 100.0]], &[1e9], &[0.0]);
        let (p, _) = oracle_best_path(&task(1e8), &s, 3).unwrap();
        assert_eq!(p, vec![0]);
        // Slow idle neighbour: local wins.
        let s = snapshot(&[[0.0, 0.0, 100.0], [100.0, 0.0, 100.0]], &[3e9, 1e9], &[0.0; 2]);
        let (p, t) = oracle_best_path(&task(1e8), &s, 3).unwrap();
        assert_eq!(p, vec![0]);
        assert!(rel(execute_path(&task(1e8), &p, &s).unwrap().t_total, t) < 1e-9);
    }

    #[test]
    fn slot_mapping_roundtrip() {
        for decider in 0..5 {
            let mut seen = vec![false; 5];
            for slot in 0..5 {
                let u = slot_to_uav(decider, slot);
                assert_eq!(uav_to_slot(decider, u), slot);
                seen[u] = true;
            }
            assert!(seen.iter().all(|s| *s));
            assert_eq!(slot_to_uav(decider, 0), decider);
        }
    }

    #[test]
    fn offload_mask_respects_ttl_and_range() {
        let s = snapshot(
            &[[0.0, 0.0, 100.0], [100.0, 0.0, 100.0], [900.0, 0.0, 100.0]],
            &[1e9; 3],
            &[0.0; 3],
        );
        let t = task(1e8);
        assert_eq!(offload_mask(0, &t, &[0], 3, &s), vec![true, true, false]);
        assert_eq!(offload_mask(1, &t, &[0, 1], 3, &s), vec![true, false, false]);
        assert_eq!(offload_mask(0, &t, &[0], 1, &s), vec![true, false, false]);
    }
}
