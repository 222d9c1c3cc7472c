//! Experiment orchestration: training and evaluation episodes, reference
//! policies, multi-seed batches, the oracle cross-check and the
//! quantization benchmark.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::features::build_local_graph;
use crate::fedlearn::{self, Federation, FlStats};
use crate::marl::{reward, Agent, LossReport, RewardBreakdown, RewardScales, RewardWeights};
use crate::metrics::{
    self, mean_completion_time, mean_energy, qos_rates, weighted_cost, EpisodeMetrics, LedgerRow,
    NormalizationAudit, RunningMinMax, TaskRow,
};
use crate::nn::params::{read_checkpoint, write_checkpoint};
use crate::nn::LocalGraph;
use crate::radio::RadioParams;
use crate::scenario::generate_scenario;
use crate::sim::{adaptive_update_interval, Completion, ConstraintAudit, StepOutcome, World};
use crate::tasking::{
    check_path, execute_path, offload_mask, oracle_enumerate, oracle_path_time, select_serving_uav, slot_to_uav,
};
use crate::tasking::{NetworkSnapshot, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Learned,
    Random,
    Greedy,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Learned => "learned",
            PolicyKind::Random => "random",
            PolicyKind::Greedy => "greedy",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(PolicyKind::Learned),
            "random" => Ok(PolicyKind::Random),
            "greedy" | "greedy-nearest" => Ok(PolicyKind::Greedy),
            _ => Err(Error::Config(format!("unknown policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub policy: PolicyKind,
    /// Update the learned policy; false freezes it.
    pub learn: bool,
    pub seed: u64,
    /// Keep per-task rows.
    pub record_tasks: bool,
    /// Label written to the `policy` column.
    pub label: String,
}

impl RunOptions {
    pub fn train(seed: u64) -> Self {
        Self { policy: PolicyKind::Learned, learn: true, seed, record_tasks: false, label: "learned".into() }
    }

    pub fn reference(policy: PolicyKind, seed: u64) -> Self {
        Self { policy, learn: false, seed, record_tasks: false, label: policy.name().into() }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub episodes: Vec<EpisodeMetrics>,
    pub tasks: Vec<TaskRow>,
    pub ledgers: Vec<LedgerRow>,
    pub audit: ConstraintAudit,
    pub norm: NormalizationAudit,
    pub fl: FlStats,
    pub agents: Vec<Agent>,
}

impl RunResult {
    /// Mean of `f` over the last `n` episodes.
    pub fn tail_mean(&self, n: usize, f: impl Fn(&EpisodeMetrics) -> f64) -> f64 {
        let start = self.episodes.len().saturating_sub(n);
        metrics::mean(&self.episodes[start..].iter().map(f).collect::<Vec<_>>())
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn uniform_disk(rng: &mut impl Rng, r: f64) -> [f64; 2] {
    let rho = r * rng.random::<f64>().sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    [rho * phi.cos(), rho * phi.sin()]
}

fn random_feasible(mask: &[bool], rng: &mut impl Rng) -> usize {
    let feasible: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    feasible[rng.random_range(0..feasible.len())]
}

/// Least-loaded feasible slot; ties go to the lowest slot.
pub fn greedy_offload(decider: usize, mask: &[bool], snap: &NetworkSnapshot) -> usize {
    (0..mask.len())
        .filter(|&s| mask[s])
        .min_by(|&a, &b| {
            snap.load[slot_to_uav(decider, a)].total_cmp(&snap.load[slot_to_uav(decider, b)]).then(a.cmp(&b))
        })
        .unwrap_or(0)
}

/// Velocity toward the centroid of devices no UAV covers; hover when every
/// device is covered. The speed never overshoots the centroid in one step.
pub fn greedy_velocity(w: &World, k: usize) -> [f64; 2] {
    let uncovered: Vec<[f64; 2]> = (0..w.num_devices())
        .filter(|&m| !(0..w.num_uavs()).any(|j| w.covers(j, m)))
        .map(|m| w.devices[m].loc)
        .collect();
    if uncovered.is_empty() {
        return [0.0; 2];
    }
    let n = uncovered.len() as f64;
    let c = [uncovered.iter().map(|p| p[0]).sum::<f64>() / n, uncovered.iter().map(|p| p[1]).sum::<f64>() / n];
    let d = [c[0] - w.uavs[k].pos[0], c[1] - w.uavs[k].pos[1]];
    let dist = d[0].hypot(d[1]);
    if dist == 0.0 {
        return [0.0; 2];
    }
    let v = w.uavs[k].v_max.min(dist / w.cfg.sim.dt);
    [d[0] / dist * v, d[1] / dist * v]
}

/// Sum-to-one deviation of the device part of a transfer row; zero rows are
/// exact.
fn transfer_deviation(g: &LocalGraph) -> Option<f64> {
    let s: f64 = g.transfer.iter().skip(1).sum();
    if g.serv_ids.is_empty() {
        None
    } else if s == 0.0 {
        Some(0.0)
    } else {
        Some((s - 1.0).abs())
    }
}

#[derive(Default)]
struct EpisodeAcc {
    completions: Vec<Completion>,
    covered: Vec<usize>,
    reward: RewardBreakdown,
    loss: LossReport,
}

impl EpisodeAcc {
    fn absorb(&mut self, out: StepOutcome, step: bool) {
        if step {
            self.covered.push(out.covered_devices);
        }
        self.completions.extend(out.completions);
    }
}

/// One run of `cfg.sim.episodes` episodes for a single seed.
pub fn run(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult> {
    run_with_agents(cfg, opts, None)
}

/// As [`run`], optionally starting from given agents (frozen evaluation of a
/// trained policy).
pub fn run_with_agents(cfg: &SimConfig, opts: &RunOptions, agents: Option<Vec<Agent>>) -> Result<RunResult> {
    cfg.validate()?;
    let seed = opts.seed;
    let k_count = cfg.sim.num_uavs;
    let scenario = generate_scenario(cfg, seed);
    let total_rate: f64 = scenario.device_rate.iter().sum();
    let mut world = World::new(cfg, scenario, mix(seed, 1));
    let mut agents =
        agents.unwrap_or_else(|| (0..k_count).map(|k| Agent::new(k, cfg, mix(seed, 100 + k as u64))).collect());
    let mut fed = Federation::new(cfg, mix(seed, 2));
    let mut policy_rng = ChaCha8Rng::seed_from_u64(mix(seed, 3));
    let weights = RewardWeights::from_config(cfg);
    let scales = RewardScales::new(cfg, total_rate);
    let learned = opts.policy == PolicyKind::Learned;

    let mut result = RunResult {
        seed,
        episodes: Vec::new(),
        tasks: Vec::new(),
        ledgers: Vec::new(),
        audit: ConstraintAudit::default(),
        norm: NormalizationAudit::default(),
        fl: FlStats::default(),
        agents: Vec::new(),
    };
    let mut mm = RunningMinMax::default();
    let steps = cfg.steps_per_episode();

    for ep in 0..cfg.sim.episodes {
        world.reset();
        agents.iter_mut().for_each(|a| a.begin_episode());
        fed.begin_episode();
        let mut graphs: Vec<Option<LocalGraph>> = vec![None; k_count];
        let mut next_refresh = vec![0.0; k_count];
        let mut acc = EpisodeAcc::default();
        let mut vels = vec![[0.0; 2]; k_count];

        for _ in 0..steps {
            let transmitting = world.transmitting();
            for k in 0..k_count {
                vels[k] = [0.0; 2];
                if !world.uavs[k].active {
                    continue;
                }
                vels[k] = match opts.policy {
                    PolicyKind::Learned => {
                        if graphs[k].is_none() || world.clock >= next_refresh[k] - 1e-9 {
                            let g = build_local_graph(&world, k, &transmitting);
                            if let Some(d) = transfer_deviation(&g) {
                                result.norm.transfer_worst = result.norm.transfer_worst.max(d);
                                result.norm.transfer_rows += 1;
                            }
                            graphs[k] = Some(g);
                            let s = &cfg.sim;
                            next_refresh[k] =
                                world.clock + adaptive_update_interval(world.uavs[k].vel, s.dt_base, s.alpha_speed);
                        }
                        let (v, rep) = agents[k].act(graphs[k].as_ref().unwrap(), opts.learn);
                        if let Some(r) = rep {
                            acc.loss.merge(&r);
                        }
                        v
                    }
                    PolicyKind::Random => uniform_disk(&mut policy_rng, world.uavs[k].v_max),
                    PolicyKind::Greedy => greedy_velocity(&world, k),
                };
            }

            let out = match opts.policy {
                PolicyKind::Learned => {
                    let ag = &mut agents;
                    world.step(&vels, &mut |d: usize, _: &Task, mask: &[bool], _: &NetworkSnapshot| {
                        ag[d].choose_offload(mask).unwrap_or(0)
                    })
                }
                PolicyKind::Random => {
                    let rng = &mut policy_rng;
                    world.step(&vels, &mut |_: usize, _: &Task, mask: &[bool], _: &NetworkSnapshot| {
                        random_feasible(mask, rng)
                    })
                }
                PolicyKind::Greedy => world.step(&vels, &mut |d: usize, _: &Task, mask: &[bool], s: &NetworkSnapshot| {
                    greedy_offload(d, mask, s)
                }),
            };

            for k in 0..k_count {
                let r = reward(k, &out, &weights, &scales);
                acc.reward.add(&r);
                if learned {
                    agents[k].record(r);
                }
            }
            fed.observe(&out);
            if learned {
                fed.tick(&world, &mut agents)?;
            }
            acc.absorb(out, true);
        }

        let tail = world.flush();
        for k in 0..k_count {
            let r = reward(k, &tail, &weights, &scales);
            acc.reward.add(&r);
            if learned {
                agents[k].add_to_last(&r);
            }
        }
        fed.observe(&tail);
        acc.absorb(tail, false);
        if learned && opts.learn {
            for a in agents.iter_mut() {
                let r = a.update(None);
                acc.loss.merge(&r);
            }
        }

        let ledgers: Vec<_> = world.uavs.iter().map(|u| u.ledger.clone()).collect();
        for l in &ledgers {
            result.norm.ledger_closure_worst = result.norm.ledger_closure_worst.max(l.closure_error());
        }
        let f_time = mean_completion_time(&acc.completions);
        let f_energy = mean_energy(&ledgers);
        mm.observe(f_time, f_energy);
        let (tn, en) = (mm.time(f_time), mm.energy(f_energy));
        let q = qos_rates(&acc.completions, &acc.covered, world.num_devices());
        if q.no_tasks {
            log::warn!("seed {seed} episode {ep}: no tasks generated");
        }
        let met = acc.completions.iter().filter(|c| c.met).count();
        let failed = acc.completions.iter().filter(|c| c.record.is_none()).count();
        result.episodes.push(EpisodeMetrics {
            seed,
            episode: ep,
            policy: opts.label.clone(),
            f_time,
            f_energy,
            f_time_norm: tn,
            f_energy_norm: en,
            f_total: weighted_cost(tn, en, cfg.reward.alpha, cfg.reward.beta),
            deadline_rate: q.deadline_rate,
            coverage_rate: q.coverage_rate,
            no_tasks: q.no_tasks,
            tasks: acc.completions.len(),
            met,
            failed,
            fl_bytes: fed.bytes_sent.clone(),
            reward: acc.reward,
            loss: acc.loss,
            violations: world.audit.violations(),
        });
        if opts.record_tasks {
            result.tasks.extend(acc.completions.iter().map(|c| TaskRow::new(seed, ep, c)));
        }
        result.ledgers.extend(ledgers.into_iter().map(|ledger| LedgerRow { seed, episode: ep, ledger }));
        result.audit.merge(&world.audit);
        log::info!(
            "seed {seed} episode {ep}: cost {:.4} deadline {:.3} energy {:.0} J",
            result.episodes.last().unwrap().f_total,
            q.deadline_rate,
            f_energy
        );
    }

    for a in &agents {
        result.norm.attention_worst = result.norm.attention_worst.max(a.worst_attention_dev);
    }
    result.norm.aggregation_worst = fed.stats.worst_weight_dev;
    result.norm.aggregation_rounds = fed.stats.rounds;
    result.fl = fed.stats.clone();
    result.agents = agents;
    Ok(result)
}

/// Independent runs over `seeds`, in seed order.
pub fn run_seeds(cfg: &SimConfig, opts: &RunOptions, seeds: &[u64]) -> Result<Vec<RunResult>> {
    seeds
        .par_iter()
        .map(|&s| run(cfg, &RunOptions { seed: s, ..opts.clone() }))
        .collect()
}

pub fn checkpoint_name(seed: u64, uav: usize) -> String {
    format!("seed{seed}_uav{uav}.ckpt")
}

pub fn save_checkpoints(dir: &Path, r: &RunResult) -> Result<()> {
    for a in &r.agents {
        std::fs::write(dir.join(checkpoint_name(r.seed, a.id)), write_checkpoint(&a.net.store))?;
    }
    Ok(())
}

/// Fresh agents with parameters read from `dir`.
pub fn load_agents(cfg: &SimConfig, dir: &Path, seed: u64) -> Result<Vec<Agent>> {
    (0..cfg.sim.num_uavs)
        .map(|k| {
            let mut a = Agent::new(k, cfg, mix(seed, 100 + k as u64));
            read_checkpoint(&mut a.net.store, &std::fs::read(dir.join(checkpoint_name(seed, k)))?)?;
            Ok(a)
        })
        .collect()
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct OracleReport {
    pub snapshots: usize,
    pub paths: usize,
    pub worst_rel: f64,
    /// Snapshots whose engine-feasible path set differs from the oracle's.
    pub set_mismatches: usize,
    pub seconds: f64,
}

fn engine_paths(task: &Task, snap: &NetworkSnapshot, serving: usize, max_hops: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack = vec![vec![serving]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        let mask = offload_mask(last, task, &path, max_hops, snap);
        if mask[0] {
            out.push(path.clone());
        }
        for (slot, ok) in mask.iter().enumerate().skip(1) {
            if *ok {
                let mut p = path.clone();
                p.push(slot_to_uav(last, slot));
                stack.push(p);
            }
        }
    }
    out.sort();
    out
}

/// Random frozen snapshot: `k` UAVs packed closely enough to form multi-hop
/// paths, random loads, frequencies and concurrent uplinks.
pub fn random_snapshot(rng: &mut impl Rng, radio: RadioParams, k: usize, devices: usize) -> NetworkSnapshot {
    let side = 1.5 * radio.r_comm;
    NetworkSnapshot {
        radio,
        uav_pos: (0..k)
            .map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side), rng.random_range(80.0..150.0)])
            .collect(),
        cpu_freq: (0..k).map(|_| rng.random_range(1e9..3e9)).collect(),
        load: (0..k).map(|_| rng.random_range(0.0..1e9)).collect(),
        active: vec![true; k],
        device_pos: (0..devices).map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side)]).collect(),
        transmitting: (0..devices).filter(|_| rng.random_bool(0.5)).collect(),
        decision_time: 0.01,
        load_max: 1e9,
    }
}

pub fn random_task(rng: &mut impl Rng, cfg: &SimConfig, devices: usize) -> Task {
    let t = &cfg.tasks;
    Task {
        id: rng.random(),
        origin: rng.random_range(0..devices),
        cycles: rng.random_range(t.cycles_m[0]..t.cycles_m[1]) * 1e6,
        in_bytes: rng.random_range(t.in_mb[0]..t.in_mb[1]) * 1e6,
        out_bytes: rng.random_range(t.out_mb[0]..t.out_mb[1]) * 1e6,
        deadline: rng.random_range(t.deadline[0]..t.deadline[1]),
        created_at: 0.0,
    }
}

/// Engine timing versus the independent oracle on `n` random snapshots with
/// 2 to `max_k` UAVs.
pub fn oracle_check(cfg: &SimConfig, n: usize, max_k: usize, seed: u64) -> Result<OracleReport> {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radio = cfg.radio.linear();
    let max_hops = cfg.sim.max_hops.min(3);
    let mut rep = OracleReport::default();
    while rep.snapshots < n {
        let k = rng.random_range(2..=max_k.max(2));
        let snap = random_snapshot(&mut rng, radio, k, 6);
        let task = random_task(&mut rng, cfg, 6);
        let Ok(all) = oracle_enumerate(&task, &snap, max_hops) else { continue };
        rep.snapshots += 1;
        let oracle_set: Vec<Vec<usize>> = all.iter().map(|p| p.0.clone()).collect();
        let serving = select_serving_uav(task.origin, &snap)?;
        if engine_paths(&task, &snap, serving, max_hops) != oracle_set {
            rep.set_mismatches += 1;
        }
        for (path, t_oracle) in &all {
            check_path(&task, path, &snap)?;
            let rec = execute_path(&task, path, &snap)?;
            let rel = (rec.t_total - t_oracle).abs() / t_oracle.abs().max(f64::MIN_POSITIVE);
            debug_assert!((oracle_path_time(&task, path, &snap) - t_oracle).abs() == 0.0);
            rep.worst_rel = rep.worst_rel.max(rel);
            rep.paths += 1;
        }
    }
    rep.seconds = start.elapsed().as_secs_f64();
    Ok(rep)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct QuantBenchReport {
    pub params: usize,
    pub bytes_full: usize,
    pub bytes_quantized: usize,
    pub wire_full: usize,
    pub wire_quantized: usize,
    pub reduction: f64,
    pub worst_bound_ratio: f64,
}

/// Message size with and without quantization for one agent whose gradients
/// come from a short learning warm-up.
pub fn quant_bench(cfg: &SimConfig, seed: u64) -> Result<QuantBenchReport> {
    let mut warm = cfg.clone();
    warm.sim.episodes = 1;
    warm.sim.episode_len = (cfg.training.window as f64 + 2.0) * cfg.sim.dt;
    warm.fl.enabled = false;
    let r = run(&warm, &RunOptions::train(seed))?;
    let agent = &r.agents[0];
    let mut qcfg = cfg.fl.clone();
    qcfg.quantize = true;
    let mut fcfg = cfg.fl.clone();
    fcfg.quantize = false;
    let q = fedlearn::build_message(agent, 1.0, &qcfg)?;
    let f = fedlearn::build_message(agent, 1.0, &fcfg)?;
    let mut worst: f64 = 0.0;
    for blob in &q.blobs {
        let deq = fedlearn::dequantize(blob);
        let orig = agent.net.store.flatten_group(blob.group);
        for i in 0..orig.len() {
            let bound = fedlearn::quantization_bound(blob, i);
            let err = (orig[i] - deq[i]).abs();
            if bound > 0.0 {
                worst = worst.max(err / bound);
            } else if err > 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    let (bq, bf) = (fedlearn::comm_cost(&q), fedlearn::comm_cost(&f));
    Ok(QuantBenchReport {
        params: q.blobs.iter().map(|b| b.len()).sum(),
        bytes_full: bf,
        bytes_quantized: bq,
        wire_full: fedlearn::encode(&f).len(),
        wire_quantized: fedlearn::encode(&q).len(),
        reduction: 1.0 - bq as f64 / bf as f64,
        worst_bound_ratio: worst,
    })
}

#[derive(Debug, Clone, Serialize)]
struct SeedSummary {
    seed: u64,
    episodes: usize,
    final_cost: f64,
    final_deadline_rate: f64,
    final_coverage_rate: f64,
    final_energy_j: f64,
    violations: u64,
    fallbacks: u64,
    fl_rounds: u64,
    fl_bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
struct Summary {
    config_hash: String,
    mode: String,
    policy: String,
    seeds: Vec<u64>,
    /// Episodes averaged in the `final_*` fields.
    final_window: usize,
    mean_final_cost: f64,
    std_final_cost: f64,
    mean_final_deadline_rate: f64,
    audit: ConstraintAudit,
    normalization: NormalizationAudit,
    per_seed: Vec<SeedSummary>,
}

pub const FINAL_WINDOW: usize = 10;

/// Writes the effective config, the CSV exports and `summary.toml`.
pub fn write_outputs(dir: &Path, cfg: &SimConfig, mode: &str, results: &[RunResult]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    metrics::write_text(&dir.join("config.toml"), &cfg.to_toml_string())?;
    let episodes: Vec<EpisodeMetrics> = results.iter().flat_map(|r| r.episodes.iter().cloned()).collect();
    let tasks: Vec<TaskRow> = results.iter().flat_map(|r| r.tasks.iter().cloned()).collect();
    let ledgers: Vec<LedgerRow> = results.iter().flat_map(|r| r.ledgers.iter().cloned()).collect();
    metrics::write_episodes(&dir.join("episodes.csv"), &episodes)?;
    metrics::write_tasks(&dir.join("tasks.csv"), &tasks)?;
    metrics::write_ledgers(&dir.join("ledger.csv"), &ledgers)?;
    metrics::write_long(&dir.join("long.csv"), &episodes)?;

    let mut audit = ConstraintAudit::default();
    let mut norm = NormalizationAudit::default();
    let per_seed: Vec<SeedSummary> = results
        .iter()
        .map(|r| {
            audit.merge(&r.audit);
            norm.merge(&r.norm);
            SeedSummary {
                seed: r.seed,
                episodes: r.episodes.len(),
                final_cost: r.tail_mean(FINAL_WINDOW, |e| e.f_total),
                final_deadline_rate: r.tail_mean(FINAL_WINDOW, |e| e.deadline_rate),
                final_coverage_rate: r.tail_mean(FINAL_WINDOW, |e| e.coverage_rate),
                final_energy_j: r.tail_mean(FINAL_WINDOW, |e| e.f_energy),
                violations: r.audit.violations(),
                fallbacks: r.audit.fallbacks,
                fl_rounds: r.fl.rounds,
                fl_bytes: r.fl.bytes,
            }
        })
        .collect();
    let costs: Vec<f64> = per_seed.iter().map(|s| s.final_cost).collect();
    let summary = Summary {
        config_hash: cfg.hash(),
        mode: mode.to_string(),
        policy: results.first().and_then(|r| r.episodes.first()).map_or(String::new(), |e| e.policy.clone()),
        seeds: results.iter().map(|r| r.seed).collect(),
        final_window: FINAL_WINDOW,
        mean_final_cost: metrics::mean(&costs),
        std_final_cost: metrics::std_dev(&costs),
        mean_final_deadline_rate: metrics::mean(&per_seed.iter().map(|s| s.final_deadline_rate).collect::<Vec<_>>()),
        audit,
        normalization: norm,
        per_seed,
    };
    let text = toml::to_string(&summary).map_err(|e| Error::Config(e.to_string()))?;
    metrics::write_text(&dir.join("summary.toml"), &text)
}
