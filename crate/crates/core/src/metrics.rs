//! Objective terms, QoS rates, running normalization and file export.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::energy::EnergyLedger;
use crate::error::Result;
use crate::marl::{LossReport, RewardBreakdown};
use crate::sim::Completion;

pub const NORM_EPS: f64 = 1e-9;
pub const ATTENTION_TOL: f64 = 1e-6;
pub const TRANSFER_TOL: f64 = 1e-6;
pub const AGGREGATION_TOL: f64 = 1e-12;

/// Min-max normalization clamped to `[0, 1]`.
pub fn normalize(value: f64, lo: f64, hi: f64) -> f64 {
    ((value - lo) / (hi - lo).max(NORM_EPS)).clamp(0.0, 1.0)
}

pub fn weighted_cost(time_norm: f64, energy_norm: f64, alpha: f64, beta: f64) -> f64 {
    alpha * time_norm + beta * energy_norm
}

/// Extrema of the episode time and energy terms seen so far in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunningMinMax {
    pub min_time: f64,
    pub max_time: f64,
    pub min_energy: f64,
    pub max_energy: f64,
}

impl Default for RunningMinMax {
    fn default() -> Self {
        Self {
            min_time: f64::INFINITY,
            max_time: f64::NEG_INFINITY,
            min_energy: f64::INFINITY,
            max_energy: f64::NEG_INFINITY,
        }
    }
}

impl RunningMinMax {
    pub fn observe(&mut self, time: f64, energy: f64) {
        self.min_time = self.min_time.min(time);
        self.max_time = self.max_time.max(time);
        self.min_energy = self.min_energy.min(energy);
        self.max_energy = self.max_energy.max(energy);
    }

    pub fn time(&self, v: f64) -> f64 {
        normalize(v, self.min_time, self.max_time)
    }

    pub fn energy(&self, v: f64) -> f64 {
        normalize(v, self.min_energy, self.max_energy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QosRates {
    pub deadline_rate: f64,
    pub coverage_rate: f64,
    /// No task was generated; the deadline rate is 1 by convention.
    pub no_tasks: bool,
}

/// Deadline rate over every generated task (failures count as misses) and
/// the time-averaged covered fraction of devices.
pub fn qos_rates(completions: &[Completion], covered_per_step: &[usize], num_devices: usize) -> QosRates {
    let met = completions.iter().filter(|c| c.met).count();
    let no_tasks = completions.is_empty();
    let deadline_rate = if no_tasks { 1.0 } else { met as f64 / completions.len() as f64 };
    let coverage_rate = if covered_per_step.is_empty() || num_devices == 0 {
        0.0
    } else {
        covered_per_step.iter().map(|c| *c as f64 / num_devices as f64).sum::<f64>() / covered_per_step.len() as f64
    };
    QosRates { deadline_rate, coverage_rate, no_tasks }
}

/// Mean completion time over tasks that finished, s; zero when none did.
pub fn mean_completion_time(completions: &[Completion]) -> f64 {
    let times: Vec<f64> = completions.iter().filter_map(|c| c.record.as_ref().map(|r| r.t_total)).collect();
    if times.is_empty() {
        0.0
    } else {
        times.iter().sum::<f64>() / times.len() as f64
    }
}

pub fn mean_energy(ledgers: &[EnergyLedger]) -> f64 {
    if ledgers.is_empty() {
        return 0.0;
    }
    ledgers.iter().map(|l| l.e_total).sum::<f64>() / ledgers.len() as f64
}

/// Worst sum-to-one deviations seen by the runtime assertions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NormalizationAudit {
    pub attention_worst: f64,
    pub transfer_worst: f64,
    pub transfer_rows: u64,
    pub aggregation_worst: f64,
    pub aggregation_rounds: u64,
    pub ledger_closure_worst: f64,
}

impl NormalizationAudit {
    pub fn ok(&self) -> bool {
        self.attention_worst <= ATTENTION_TOL
            && self.transfer_worst <= TRANSFER_TOL
            && self.aggregation_worst <= AGGREGATION_TOL
    }

    pub fn merge(&mut self, o: &NormalizationAudit) {
        self.attention_worst = self.attention_worst.max(o.attention_worst);
        self.transfer_worst = self.transfer_worst.max(o.transfer_worst);
        self.transfer_rows += o.transfer_rows;
        self.aggregation_worst = self.aggregation_worst.max(o.aggregation_worst);
        self.aggregation_rounds += o.aggregation_rounds;
        self.ledger_closure_worst = self.ledger_closure_worst.max(o.ledger_closure_worst);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub episode: usize,
    pub policy: String,
    /// Mean completion time of finished tasks, s.
    pub f_time: f64,
    /// Mean energy per UAV, J.
    pub f_energy: f64,
    pub f_time_norm: f64,
    pub f_energy_norm: f64,
    pub f_total: f64,
    pub deadline_rate: f64,
    pub coverage_rate: f64,
    pub no_tasks: bool,
    pub tasks: usize,
    pub met: usize,
    pub failed: usize,
    pub fl_bytes: Vec<u64>,
    pub reward: RewardBreakdown,
    pub loss: LossReport,
    pub violations: u64,
}

impl EpisodeMetrics {
    pub fn fl_bytes_total(&self) -> u64 {
        self.fl_bytes.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRow {
    pub seed: u64,
    pub episode: usize,
    pub task_id: u64,
    pub origin: usize,
    pub serving: Option<usize>,
    pub executor: Option<usize>,
    pub hops: usize,
    pub created_at: f64,
    pub deadline: f64,
    pub cycles: f64,
    pub t_total: Option<f64>,
    pub t_uplink: Option<f64>,
    pub t_queue: Option<f64>,
    pub met: bool,
    pub overshoot: f64,
}

impl TaskRow {
    pub fn new(seed: u64, episode: usize, c: &Completion) -> Self {
        Self {
            seed,
            episode,
            task_id: c.task_id,
            origin: c.origin,
            serving: (c.serving != usize::MAX).then_some(c.serving),
            executor: c.record.as_ref().map(|r| r.executor()),
            hops: c.record.as_ref().map_or(0, |r| r.hops()),
            created_at: c.created_at,
            deadline: c.deadline,
            cycles: c.cycles,
            t_total: c.record.as_ref().map(|r| r.t_total),
            t_uplink: c.record.as_ref().map(|r| r.t_uplink),
            t_queue: c.record.as_ref().map(|r| r.t_queue),
            met: c.met,
            overshoot: c.overshoot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub seed: u64,
    pub episode: usize,
    pub ledger: EnergyLedger,
}

/// Pooled normalization across several metric sets: each set's weighted
/// costs under one shared min-max range.
pub fn pooled_costs(sets: &[&[EpisodeMetrics]], alpha: f64, beta: f64) -> Vec<Vec<f64>> {
    let mut mm = RunningMinMax::default();
    sets.iter().flat_map(|s| s.iter()).for_each(|e| mm.observe(e.f_time, e.f_energy));
    sets.iter()
        .map(|s| s.iter().map(|e| weighted_cost(mm.time(e.f_time), mm.energy(e.f_energy), alpha, beta)).collect())
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; zero below two samples.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const EPISODE_COLUMNS: &[&str] = &[
    "seed",
    "episode",
    "policy",
    "f_time_s",
    "f_energy_j",
    "f_time_norm",
    "f_energy_norm",
    "f_total",
    "deadline_rate",
    "coverage_rate",
    "no_tasks",
    "tasks",
    "met",
    "failed",
    "fl_bytes_total",
    "fl_bytes_per_uav",
    "reward_performance",
    "reward_deadline",
    "reward_coverage",
    "loss_vel",
    "loss_off",
    "loss_critic",
    "entropy_vel",
    "entropy_off",
    "violations",
];

fn episode_record(e: &EpisodeMetrics) -> Vec<String> {
    let per_uav = if e.fl_bytes.is_empty() { 0.0 } else { e.fl_bytes_total() as f64 / e.fl_bytes.len() as f64 };
    vec![
        e.seed.to_string(),
        e.episode.to_string(),
        e.policy.clone(),
        e.f_time.to_string(),
        e.f_energy.to_string(),
        e.f_time_norm.to_string(),
        e.f_energy_norm.to_string(),
        e.f_total.to_string(),
        e.deadline_rate.to_string(),
        e.coverage_rate.to_string(),
        e.no_tasks.to_string(),
        e.tasks.to_string(),
        e.met.to_string(),
        e.failed.to_string(),
        e.fl_bytes_total().to_string(),
        per_uav.to_string(),
        e.reward.performance.to_string(),
        e.reward.deadline.to_string(),
        e.reward.coverage.to_string(),
        e.loss.loss_vel.to_string(),
        e.loss.loss_off.to_string(),
        e.loss.loss_critic.to_string(),
        e.loss.entropy_vel.to_string(),
        e.loss.entropy_off.to_string(),
        e.violations.to_string(),
    ]
}

pub const TASK_COLUMNS: &[&str] = &[
    "seed", "episode", "task_id", "origin", "serving", "executor", "hops", "created_at_s", "deadline_s", "cycles",
    "t_total_s", "t_uplink_s", "t_queue_s", "met", "overshoot_s",
];

fn task_record(t: &TaskRow) -> Vec<String> {
    vec![
        t.seed.to_string(),
        t.episode.to_string(),
        t.task_id.to_string(),
        t.origin.to_string(),
        opt(t.serving),
        opt(t.executor),
        t.hops.to_string(),
        t.created_at.to_string(),
        t.deadline.to_string(),
        t.cycles.to_string(),
        opt(t.t_total),
        opt(t.t_uplink),
        opt(t.t_queue),
        t.met.to_string(),
        t.overshoot.to_string(),
    ]
}

pub const LEDGER_COLUMNS: &[&str] = &[
    "seed", "episode", "uav", "e_trajectory", "e_uplink", "e_decision", "e_forward", "e_process", "e_return",
    "e_downlink", "e_total", "closure_error",
];

fn ledger_record(r: &LedgerRow) -> Vec<String> {
    let l = &r.ledger;
    vec![
        r.seed.to_string(),
        r.episode.to_string(),
        l.uav.to_string(),
        l.e_trajectory.to_string(),
        l.e_uplink.to_string(),
        l.e_decision.to_string(),
        l.e_forward.to_string(),
        l.e_process.to_string(),
        l.e_return.to_string(),
        l.e_downlink.to_string(),
        l.e_total.to_string(),
        l.closure_error().to_string(),
    ]
}

pub const LONG_COLUMNS: &[&str] = &["seed", "policy", "episode", "metric", "value"];

fn long_records(e: &EpisodeMetrics) -> Vec<Vec<String>> {
    let metrics = [
        ("f_time", e.f_time),
        ("f_energy", e.f_energy),
        ("f_total", e.f_total),
        ("deadline_rate", e.deadline_rate),
        ("coverage_rate", e.coverage_rate),
        ("fl_bytes", e.fl_bytes_total() as f64),
    ];
    metrics
        .iter()
        .map(|(m, v)| vec![e.seed.to_string(), e.policy.clone(), e.episode.to_string(), m.to_string(), v.to_string()])
        .collect()
}

fn write_table(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_episodes(path: &Path, rows: &[EpisodeMetrics]) -> Result<()> {
    write_table(path, EPISODE_COLUMNS, rows.iter().map(episode_record))
}

pub fn write_tasks(path: &Path, rows: &[TaskRow]) -> Result<()> {
    write_table(path, TASK_COLUMNS, rows.iter().map(task_record))
}

pub fn write_ledgers(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    write_table(path, LEDGER_COLUMNS, rows.iter().map(ledger_record))
}

pub fn write_long(path: &Path, rows: &[EpisodeMetrics]) -> Result<()> {
    write_table(path, LONG_COLUMNS, rows.iter().flat_map(long_records))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(1.0, 1.0, 5.0), 0.0);
        assert_eq!(normalize(5.0, 1.0, 5.0), 1.0);
        assert_eq!(normalize(2.0, 1.0, 5.0), 0.25);
        assert_eq!(normalize(3.0, 3.0, 3.0), 0.0);
    }

    #[test]
    fn weighted_cost_examples() {
        assert_eq!(weighted_cost(0.0, 0.0, 0.5, 0.5), 0.0);
        assert!((weighted_cost(0.2, 0.4, 0.5, 0.5) - 0.3).abs() < 1e-15);
        assert_eq!(weighted_cost(0.37, 0.9, 1.0, 0.0), 0.37);
    }

    fn completion(met: bool) -> Completion {
        Completion {
            task_id: 0,
            origin: 0,
            serving: 0,
            created_at: 0.0,
            deadline: 1.0,
            cycles: 1.0,
            record: None,
            met,
            overshoot: 0.0,
        }
    }

    #[test]
    fn qos_examples() {
        let all: Vec<_> = (0..10).map(|_| completion(true)).collect();
        assert_eq!(qos_rates(&all, &[4, 4], 4).deadline_rate, 1.0);
        let mut nine = all.clone();
        nine[3].met = false;
        let q = qos_rates(&nine, &[4, 4], 4);
        assert!((q.deadline_rate - 0.9).abs() < 1e-15);
        assert_eq!(q.coverage_rate, 1.0);
        let none = qos_rates(&[], &[2, 4], 4);
        assert!(none.no_tasks && none.deadline_rate == 1.0);
        assert!((none.coverage_rate - 0.75).abs() < 1e-15);
    }

    #[test]
    fn running_extrema_never_contract() {
        let mut mm = RunningMinMax::default();
        mm.observe(2.0, 10.0);
        mm.observe(1.0, 20.0);
        mm.observe(1.5, 15.0);
        assert_eq!((mm.min_time, mm.max_time, mm.min_energy, mm.max_energy), (1.0, 2.0, 10.0, 20.0));
        assert_eq!(mm.energy(15.0), 0.5);
    }

    #[test]
    fn empty_export_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_episodes(&p, &[]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("seed,episode,policy"));
    }

    #[test]
    fn std_dev_example() {
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(std_dev(&[3.0]), 0.0);
    }
}
