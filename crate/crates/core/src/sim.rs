//! Discrete-time world engine.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::config::SimConfig;
use crate::energy::{flight_power, task_energy, Component, EnergyLedger, EnergyParams};
use crate::radio::{self, RadioParams};
use crate::tasking::{
    check_path, execute_path, offload_mask, select_serving_uav, slot_to_uav, ComputeQueue, NetworkSnapshot,
    PathRecord, Task,
};

/// Scales `v` onto the disk of radius `v_max` when it lies outside.
pub fn clip_velocity(v: [f64; 2], v_max: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n <= v_max {
        v
    } else {
        [v[0] * v_max / n, v[1] * v_max / n]
    }
}

pub fn speed(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Graph refresh interval, shorter for faster UAVs.
pub fn adaptive_update_interval(v: [f64; 2], dt_base: f64, alpha_speed: f64) -> f64 {
    dt_base / (1.0 + alpha_speed * speed(v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UavState {
    pub id: usize,
    pub pos: [f64; 3],
    pub vel: [f64; 2],
    pub energy_remaining: f64,
    pub cpu_freq: f64,
    pub v_max: f64,
    pub accel: f64,
    pub active: bool,
    #[serde(skip)]
    pub queue: ComputeQueue,
    pub ledger: EnergyLedger,
}

/// Moves `u` by `vel·dt` inside `[0, area]²`. A coordinate that would leave
/// the area stops at the wall and the matching velocity component is zeroed.
/// Returns the velocity actually flown.
pub fn update_position(u: &mut UavState, dt: f64, area: f64) -> [f64; 2] {
    let mut flown = [0.0; 2];
    for i in 0..2 {
        let target = u.pos[i] + u.vel[i] * dt;
        let clamped = target.clamp(0.0, area);
        if clamped != target {
            flown[i] = (clamped - u.pos[i]) / dt;
            u.vel[i] = 0.0;
        } else {
            flown[i] = u.vel[i];
        }
        u.pos[i] = clamped;
    }
    flown
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IotDevice {
    pub id: usize,
    pub loc: [f64; 2],
    /// Arrival rate, tasks/s.
    pub rate: f64,
    /// `(task id, absolute deadline)` of tasks not yet finished.
    pub pending: Vec<(u64, f64)>,
}

impl IotDevice {
    pub fn queue_len(&self) -> usize {
        self.pending.len()
    }

    /// Remaining time to the earliest pending deadline; `+∞` when idle.
    pub fn most_urgent_deadline(&self, now: f64) -> f64 {
        self.pending.iter().map(|p| (p.1 - now).max(0.0)).fold(f64::INFINITY, f64::min)
    }
}

/// Draws this step's arrivals for one device.
pub fn spawn_tasks(
    device: &IotDevice,
    dt: f64,
    cfg: &SimConfig,
    clock: f64,
    next_id: &mut u64,
    rng: &mut impl Rng,
) -> Vec<Task> {
    let mean = device.rate * dt;
    if mean <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(mean).expect("positive Poisson mean").sample(rng) as usize;
    let t = &cfg.tasks;
    let mut uniform = |r: [f64; 2]| if r[0] == r[1] { r[0] } else { rng.random_range(r[0]..r[1]) };
    (0..count)
        .map(|_| {
            let task = Task {
                id: *next_id,
                origin: device.id,
                cycles: uniform(t.cycles_m) * 1e6,
                in_bytes: uniform(t.in_mb) * 1e6,
                out_bytes: uniform(t.out_mb) * 1e6,
                deadline: uniform(t.deadline),
                created_at: clock,
            };
            *next_id += 1;
            task
        })
        .collect()
}

/// Initial placement of devices and UAVs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub device_loc: Vec<[f64; 2]>,
    pub device_rate: Vec<f64>,
    pub uav_xy: Vec<[f64; 2]>,
    pub altitude: Vec<f64>,
    pub cpu_freq: Vec<f64>,
}

/// Counters of hard-constraint checks; all `*_violations` must stay zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConstraintAudit {
    pub checks: u64,
    pub velocity_violations: u64,
    pub kinematics_violations: u64,
    pub admission_violations: u64,
    pub energy_violations: u64,
    pub capacity_violations: u64,
    pub connectivity_violations: u64,
    /// Tasks whose policy had no feasible target and were placed by the
    /// fallback rule.
    pub fallbacks: u64,
    /// Actions addressed to inactive UAVs.
    pub ignored_actions: u64,
    /// Tasks refused because no UAV on their path had queue room.
    pub rejected: u64,
}

impl ConstraintAudit {
    pub fn violations(&self) -> u64 {
        self.velocity_violations
            + self.kinematics_violations
            + self.admission_violations
            + self.energy_violations
            + self.capacity_violations
            + self.connectivity_violations
    }

    pub fn merge(&mut self, o: &ConstraintAudit) {
        self.checks += o.checks;
        self.velocity_violations += o.velocity_violations;
        self.kinematics_violations += o.kinematics_violations;
        self.admission_violations += o.admission_violations;
        self.energy_violations += o.energy_violations;
        self.capacity_violations += o.capacity_violations;
        self.connectivity_violations += o.connectivity_violations;
        self.fallbacks += o.fallbacks;
        self.ignored_actions += o.ignored_actions;
        self.rejected += o.rejected;
    }
}

#[derive(Debug, Clone, PartialEq)]
struct InFlight {
    task: Task,
    record: PathRecord,
    done_at: f64,
}

/// A task that left the system this step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Completion {
    pub task_id: u64,
    pub origin: usize,
    pub serving: usize,
    pub created_at: f64,
    pub deadline: f64,
    pub cycles: f64,
    /// `None` when the task failed before completing.
    pub record: Option<PathRecord>,
    pub met: bool,
    pub overshoot: f64,
}

/// One offloading decision taken during admission.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub decider: usize,
    pub task_id: u64,
    pub mask: Vec<bool>,
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admission {
    pub task_id: u64,
    pub serving: usize,
    pub t_total: f64,
    pub overshoot: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutcome {
    pub step: usize,
    /// Energy debited to each UAV during this step, J.
    pub energy: Vec<f64>,
    pub completions: Vec<Completion>,
    pub decisions: Vec<Decision>,
    /// Tasks placed on a path this step; their timing is fixed on admission.
    pub admitted: Vec<Admission>,
    /// Devices covered by each UAV after moving.
    pub covered_by: Vec<usize>,
    /// Devices covered by at least one UAV.
    pub covered_devices: usize,
    pub arrivals: usize,
    pub flown: Vec<[f64; 2]>,
}

/// Chooses an offloading slot for `decider`; `mask` marks feasible slots.
pub trait OffloadChooser {
    fn choose(&mut self, decider: usize, task: &Task, mask: &[bool], snap: &NetworkSnapshot) -> usize;
}

impl<F: FnMut(usize, &Task, &[bool], &NetworkSnapshot) -> usize> OffloadChooser for F {
    fn choose(&mut self, decider: usize, task: &Task, mask: &[bool], snap: &NetworkSnapshot) -> usize {
        self(decider, task, mask, snap)
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub cfg: SimConfig,
    pub radio: RadioParams,
    pub energy: EnergyParams,
    pub scenario: Scenario,
    pub clock: f64,
    pub step: usize,
    pub uavs: Vec<UavState>,
    pub devices: Vec<IotDevice>,
    inflight: BTreeMap<u64, InFlight>,
    uplink_busy_until: Vec<f64>,
    /// Tasks forwarded from `k` to `j` this episode.
    pub coop_count: Vec<Vec<f64>>,
    pub audit: ConstraintAudit,
    pub rng: ChaCha8Rng,
    next_task_id: u64,
}

impl World {
    pub fn new(cfg: &SimConfig, scenario: Scenario, seed: u64) -> Self {
        let k = scenario.uav_xy.len();
        let mut w = Self {
            cfg: cfg.clone(),
            radio: cfg.radio.linear(),
            energy: EnergyParams::from_config(cfg),
            scenario,
            clock: 0.0,
            step: 0,
            uavs: Vec::new(),
            devices: Vec::new(),
            inflight: BTreeMap::new(),
            uplink_busy_until: Vec::new(),
            coop_count: vec![vec![0.0; k]; k],
            audit: ConstraintAudit::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_task_id: 0,
        };
        w.reset();
        w
    }

    /// Restores the initial scenario; the random stream continues.
    pub fn reset(&mut self) {
        let s = &self.scenario;
        let cfg = &self.cfg.sim;
        self.uavs = (0..s.uav_xy.len())
            .map(|k| UavState {
                id: k,
                pos: [s.uav_xy[k][0], s.uav_xy[k][1], s.altitude[k]],
                vel: [0.0; 2],
                energy_remaining: cfg.battery,
                cpu_freq: s.cpu_freq[k],
                v_max: cfg.v_max,
                accel: cfg.accel,
                active: true,
                queue: ComputeQueue::new(k),
                ledger: EnergyLedger::new(k),
            })
            .collect();
        self.devices = (0..s.device_loc.len())
            .map(|m| IotDevice { id: m, loc: s.device_loc[m], rate: s.device_rate[m], pending: Vec::new() })
            .collect();
        self.inflight.clear();
        self.uplink_busy_until = vec![f64::NEG_INFINITY; self.devices.len()];
        let k = self.uavs.len();
        self.coop_count = vec![vec![0.0; k]; k];
        self.clock = 0.0;
        self.step = 0;
        self.audit = ConstraintAudit::default();
    }

    pub fn num_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn snapshot(&self, transmitting: Vec<usize>) -> NetworkSnapshot {
        NetworkSnapshot {
            radio: self.radio,
            uav_pos: self.uavs.iter().map(|u| u.pos).collect(),
            cpu_freq: self.uavs.iter().map(|u| u.cpu_freq).collect(),
            load: self.uavs.iter().map(|u| u.queue.load()).collect(),
            active: self.uavs.iter().map(|u| u.active).collect(),
            device_pos: self.devices.iter().map(|d| d.loc).collect(),
            transmitting,
            decision_time: self.cfg.sim.decision_time,
            load_max: self.cfg.sim.load_max,
        }
    }

    /// Devices with an uplink still in progress.
    pub fn transmitting(&self) -> Vec<usize> {
        (0..self.devices.len()).filter(|&m| self.uplink_busy_until[m] > self.clock).collect()
    }

    pub fn covers(&self, k: usize, m: usize) -> bool {
        let u = &self.uavs[k];
        if !u.active {
            return false;
        }
        let d = self.devices[m].loc;
        let dist = radio::distance(u.pos, [d[0], d[1], 0.0]);
        self.radio.downlink_rssi(dist).map(|r| radio::covered(r, self.radio.rssi_min)).unwrap_or(true)
    }

    /// Historical cooperation frequency from `k` to `j`.
    pub fn coop_frequency(&self, k: usize, j: usize) -> f64 {
        let total: f64 = self.coop_count[k].iter().sum();
        if total == 0.0 {
            0.0
        } else {
            self.coop_count[k][j] / total
        }
    }

    pub fn steps_per_episode(&self) -> usize {
        self.cfg.steps_per_episode()
    }

    pub fn inflight_len(&self) -> usize {
        self.inflight.len()
    }

    /// Advances the world by one step under the given velocity commands.
    pub fn step(&mut self, velocities: &[[f64; 2]], chooser: &mut dyn OffloadChooser) -> StepOutcome {
        let dt = self.cfg.sim.dt;
        let k_count = self.uavs.len();
        let mut out = StepOutcome { step: self.step, energy: vec![0.0; k_count], ..Default::default() };

        // Arrivals and admission use the positions at the start of the step.
        let mut arrivals = Vec::new();
        for m in 0..self.devices.len() {
            let tasks = spawn_tasks(&self.devices[m], dt, &self.cfg, self.clock, &mut self.next_task_id, &mut self.rng);
            arrivals.extend(tasks);
        }
        out.arrivals = arrivals.len();
        let mut transmitting = self.transmitting();
        for t in &arrivals {
            if !transmitting.contains(&t.origin) {
                transmitting.push(t.origin);
            }
        }
        transmitting.sort_unstable();
        for task in arrivals {
            self.admit(task, &transmitting, chooser, &mut out);
        }

        // Kinematics and flight energy.
        for k in 0..k_count {
            let u = &mut self.uavs[k];
            if !u.active {
                if velocities.get(k).is_some_and(|v| v[0] != 0.0 || v[1] != 0.0) {
                    self.audit.ignored_actions += 1;
                }
                out.flown.push([0.0; 2]);
                continue;
            }
            u.vel = clip_velocity(velocities[k], u.v_max);
            let before = u.pos;
            let flown = update_position(u, dt, self.cfg.sim.area);
            self.audit.checks += 2;
            if speed(flown) > u.v_max * (1.0 + 1e-12) {
                self.audit.velocity_violations += 1;
            }
            let expect = [before[0] + flown[0] * dt, before[1] + flown[1] * dt];
            let tol = 1e-9 * self.cfg.sim.area;
            if (expect[0] - u.pos[0]).abs() > tol || (expect[1] - u.pos[1]).abs() > tol || u.pos[2] != before[2] {
                self.audit.kinematics_violations += 1;
            }
            let e = flight_power(speed(flown), &self.energy) * dt;
            Self::debit(u, Component::Trajectory, e, &mut out.energy[k]);
            out.flown.push(flown);
        }

        for u in self.uavs.iter_mut().filter(|u| u.active) {
            u.queue.drain(u.cpu_freq * dt);
        }

        self.clock = (self.step + 1) as f64 * dt;
        self.step += 1;
        self.complete_due(self.clock, &mut out);

        out.covered_by = vec![0; k_count];
        for m in 0..self.devices.len() {
            let mut any = false;
            for k in 0..k_count {
                if self.covers(k, m) {
                    any = true;
                    out.covered_by[k] += 1;
                }
            }
            out.covered_devices += usize::from(any);
        }

        self.deactivate_depleted(&mut out);
        for u in &self.uavs {
            self.audit.checks += 1;
            if u.ledger.e_total > self.cfg.sim.battery * (1.0 + 1e-12) || u.energy_remaining < 0.0 {
                self.audit.energy_violations += 1;
            }
            if u.queue.load() > self.cfg.sim.load_max {
                self.audit.capacity_violations += 1;
            }
        }
        out
    }

    fn debit(u: &mut UavState, c: Component, joules: f64, acc: &mut f64) {
        u.ledger.debit(c, joules);
        u.energy_remaining -= joules;
        *acc += joules;
    }

    fn admit(
        &mut self,
        task: Task,
        transmitting: &[usize],
        chooser: &mut dyn OffloadChooser,
        out: &mut StepOutcome,
    ) {
        let snap = self.snapshot(transmitting.to_vec());
        let serving = match select_serving_uav(task.origin, &snap) {
            Ok(k) => k,
            Err(_) => {
                out.completions.push(Completion {
                    task_id: task.id,
                    origin: task.origin,
                    serving: usize::MAX,
                    created_at: task.created_at,
                    deadline: task.deadline,
                    cycles: task.cycles,
                    record: None,
                    met: false,
                    overshoot: 0.0,
                });
                return;
            }
        };
        let max_hops = self.cfg.sim.max_hops;
        let mut path = vec![serving];
        loop {
            let decider = *path.last().unwrap();
            let mask = offload_mask(decider, &task, &path, max_hops, &snap);
            if !mask.iter().any(|m| *m) {
                self.audit.fallbacks += 1;
                // Retreat to the least-loaded UAV already on the path that
                // still has room; reject the task when none has.
                let best = path
                    .iter()
                    .enumerate()
                    .filter(|(_, &u)| snap.has_capacity(u, task.cycles))
                    .min_by(|a, b| snap.load[*a.1].total_cmp(&snap.load[*b.1]).then(a.0.cmp(&b.0)))
                    .map(|(i, _)| i);
                match best {
                    Some(i) => path.truncate(i + 1),
                    None => {
                        self.audit.rejected += 1;
                        out.completions.push(Completion {
                            task_id: task.id,
                            origin: task.origin,
                            serving,
                            created_at: task.created_at,
                            deadline: task.deadline,
                            cycles: task.cycles,
                            record: None,
                            met: false,
                            overshoot: 0.0,
                        });
                        return;
                    }
                }
                break;
            }
            let slot = chooser.choose(decider, &task, &mask, &snap);
            let slot = if slot < mask.len() && mask[slot] {
                slot
            } else {
                self.audit.ignored_actions += 1;
                mask.iter().position(|m| *m).unwrap()
            };
            out.decisions.push(Decision { decider, task_id: task.id, mask, slot });
            if slot == 0 {
                break;
            }
            let next = slot_to_uav(decider, slot);
            self.coop_count[decider][next] += 1.0;
            path.push(next);
        }

        self.audit.checks += 3;
        let record = match check_path(&task, &path, &snap) {
            Ok(()) => execute_path(&task, &path, &snap).expect("checked path executes"),
            Err(_) => {
                // Unreachable while the mask and fallback hold; classify it anyway.
                if !snap.covers(path[0], task.origin) {
                    self.audit.admission_violations += 1;
                }
                if path.windows(2).any(|w| !snap.linked(w[0], w[1])) {
                    self.audit.connectivity_violations += 1;
                }
                if !snap.has_capacity(*path.last().unwrap(), task.cycles) {
                    self.audit.capacity_violations += 1;
                }
                let mut relaxed = snap.clone();
                relaxed.load_max = f64::INFINITY;
                execute_path(&task, &path, &relaxed).expect("relaxed path executes")
            }
        };
        out.admitted.push(Admission {
            task_id: task.id,
            serving: record.path[0],
            t_total: record.t_total,
            overshoot: record.overshoot(task.deadline),
        });
        let exec = record.executor();
        self.uavs[exec].queue.push(task.id, task.cycles);
        let busy = self.clock + record.t_uplink;
        if busy > self.uplink_busy_until[task.origin] {
            self.uplink_busy_until[task.origin] = busy;
        }
        self.devices[task.origin].pending.push((task.id, task.created_at + task.deadline));
        let done_at = task.created_at + record.t_total;
        self.inflight.insert(task.id, InFlight { task, record, done_at });
    }

    fn complete_due(&mut self, until: f64, out: &mut StepOutcome) {
        let due: Vec<u64> = self.inflight.iter().filter(|(_, f)| f.done_at <= until).map(|(id, _)| *id).collect();
        for id in due {
            let f = self.inflight.remove(&id).unwrap();
            self.finish(f, out);
        }
    }

    fn finish(&mut self, f: InFlight, out: &mut StepOutcome) {
        let exec = f.record.executor();
        let charges = task_energy(&f.record, f.task.cycles, self.uavs[exec].cpu_freq, &self.radio, &self.energy);
        for c in charges {
            let u = &mut self.uavs[c.uav];
            Self::debit(u, c.component, c.joules, &mut out.energy[c.uav]);
        }
        let dev = &mut self.devices[f.task.origin];
        dev.pending.retain(|p| p.0 != f.task.id);
        out.completions.push(Completion {
            task_id: f.task.id,
            origin: f.task.origin,
            serving: f.record.path[0],
            created_at: f.task.created_at,
            deadline: f.task.deadline,
            cycles: f.task.cycles,
            met: f.record.met_deadline,
            overshoot: f.record.overshoot(f.task.deadline),
            record: Some(f.record),
        });
    }

    fn fail(&mut self, f: InFlight, out: &mut StepOutcome) {
        self.devices[f.task.origin].pending.retain(|p| p.0 != f.task.id);
        out.completions.push(Completion {
            task_id: f.task.id,
            origin: f.task.origin,
            serving: f.record.path[0],
            created_at: f.task.created_at,
            deadline: f.task.deadline,
            cycles: f.task.cycles,
            record: None,
            met: false,
            overshoot: 0.0,
        });
    }

    fn deactivate_depleted(&mut self, out: &mut StepOutcome) {
        let reserve = flight_power(self.cfg.sim.v_max, &self.energy) * self.cfg.sim.dt;
        let mut newly = Vec::new();
        for u in self.uavs.iter_mut() {
            if u.active && u.energy_remaining < reserve {
                u.active = false;
                u.vel = [0.0; 2];
                u.queue.clear();
                newly.push(u.id);
            }
        }
        if newly.is_empty() {
            return;
        }
        let lost: Vec<u64> = self
            .inflight
            .iter()
            .filter(|(_, f)| f.record.path.iter().any(|k| newly.contains(k)))
            .map(|(id, _)| *id)
            .collect();
        for id in lost {
            let f = self.inflight.remove(&id).unwrap();
            self.fail(f, out);
        }
    }

    /// Completes every task still in flight (end of episode).
    pub fn flush(&mut self) -> StepOutcome {
        let mut out = StepOutcome { step: self.step, energy: vec![0.0; self.uavs.len()], ..Default::default() };
        self.complete_due(f64::INFINITY, &mut out);
        out
    }
}
