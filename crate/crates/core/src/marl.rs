//! Dual-actor single-critic agents: rewards, action sampling and the
//! on-policy actor-critic update.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::SimConfig;
use crate::energy::{flight_power, EnergyParams};
use crate::error::{Error, Result};
use crate::nn::{Adam, Forward, Grads, Group, LocalGraph, Network, Tape, Var};
use crate::sim::{clip_velocity, StepOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub eta: f64,
    /// Charge time and overshoot when a task is admitted rather than when it
    /// completes.
    pub at_admission: bool,
    /// Share time and overshoot across the fleet.
    pub team: bool,
}

impl RewardWeights {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let r = &cfg.reward;
        Self { alpha: r.alpha, beta: r.beta, lambda: r.lambda, eta: r.eta, at_admission: r.credit_at_admission, team: r.team_credit }
    }
}

/// Per-step normalizers of the performance term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardScales {
    /// Completion-time scale: maximum deadline times the expected number of
    /// tasks one UAV serves per step.
    pub time: f64,
    /// Energy scale: one step of flight at maximum speed, J.
    pub energy: f64,
}

impl RewardScales {
    pub fn new(cfg: &SimConfig, total_rate: f64) -> Self {
        let per_uav_step = (total_rate * cfg.sim.dt / cfg.sim.num_uavs as f64).max(1e-9);
        Self {
            time: cfg.tasks.deadline[1] * per_uav_step,
            energy: flight_power(cfg.sim.v_max, &EnergyParams::from_config(cfg)) * cfg.sim.dt,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub performance: f64,
    pub deadline: f64,
    pub coverage: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.performance + self.deadline + self.coverage
    }

    pub fn add(&mut self, o: &RewardBreakdown) {
        self.performance += o.performance;
        self.deadline += o.deadline;
        self.coverage += o.coverage;
    }
}

/// Reward of UAV `k` for one step. Completion time counts against the
/// serving UAV (or the whole fleet under team credit); energy against the
/// UAV that spent it.
pub fn reward(k: usize, out: &StepOutcome, w: &RewardWeights, s: &RewardScales) -> RewardBreakdown {
    let mut time = 0.0;
    let mut overshoot = 0.0;
    let mine = |serving: usize| w.team || serving == k;
    if w.at_admission {
        for a in out.admitted.iter().filter(|a| mine(a.serving)) {
            time += a.t_total;
            overshoot += a.overshoot;
        }
    } else {
        for c in out.completions.iter().filter(|c| mine(c.serving)) {
            if let Some(rec) = &c.record {
                time += rec.t_total;
                overshoot += c.overshoot;
            }
        }
    }
    if w.team {
        let n = out.energy.len().max(1) as f64;
        time /= n;
        overshoot /= n;
    }
    let energy = out.energy.get(k).copied().unwrap_or(0.0);
    RewardBreakdown {
        performance: -(w.alpha * time / s.time + w.beta * energy / s.energy),
        deadline: -w.lambda * overshoot,
        coverage: w.eta * out.covered_by.get(k).copied().unwrap_or(0) as f64,
    }
}

/// One-step temporal-difference advantage.
pub fn advantage(r: f64, gamma: f64, v_next: f64, v: f64, done: bool) -> f64 {
    r + if done { 0.0 } else { gamma * v_next } - v
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log density of a diagonal Gaussian.
pub fn gaussian_logprob(a: [f64; 2], mu: [f64; 2], log_sigma: [f64; 2]) -> f64 {
    (0..2)
        .map(|i| {
            let z = (a[i] - mu[i]) / log_sigma[i].exp();
            -0.5 * z * z - log_sigma[i] - HALF_LN_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_sigma: [f64; 2]) -> f64 {
    log_sigma.iter().map(|ls| ls + 0.5 * (2.0 * PI * E).ln()).sum()
}

/// Softmax over the feasible slots; infeasible slots get probability 0.
pub fn categorical_probs(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let mx = logits.iter().zip(mask).filter(|(_, m)| **m).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return Err(Error::ExhaustedActions);
    }
    let e: Vec<f64> = logits.iter().zip(mask).map(|(l, &m)| if m { (l - mx).exp() } else { 0.0 }).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

pub fn categorical_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Inverse-CDF draw; never returns a zero-probability slot.
pub fn sample_categorical(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > 0.0 {
            acc += x;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Samples a velocity; returns `(pre-clip sample, clipped action, log-prob)`.
pub fn sample_velocity(
    mu: [f64; 2],
    log_sigma: [f64; 2],
    v_max: f64,
    rng: &mut impl Rng,
) -> ([f64; 2], [f64; 2], f64) {
    let eps: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
    let a = [mu[0] + log_sigma[0].exp() * eps[0], mu[1] + log_sigma[1].exp() * eps[1]];
    (a, clip_velocity(a, v_max), gaussian_logprob(a, mu, log_sigma))
}

/// `log N(a; μ, σ)` recorded on the tape.
pub fn tape_gaussian_logprob(t: &mut Tape, mu: Var, log_sigma: Var, a: [f64; 2]) -> Var {
    let av = t.input(1, 2, a.to_vec());
    let diff = t.sub(av, mu);
    let neg = t.scale(log_sigma, -1.0);
    let inv = t.exp(neg);
    let z = t.mul(diff, inv);
    let sq = t.square(z);
    let s1 = t.sum(sq);
    let s1 = t.scale(s1, -0.5);
    let s2 = t.sum(log_sigma);
    let lp = t.sub(s1, s2);
    t.add_scalar(lp, -2.0 * HALF_LN_2PI)
}

pub fn tape_gaussian_entropy(t: &mut Tape, log_sigma: Var) -> Var {
    let s = t.sum(log_sigma);
    t.add_scalar(s, (2.0 * PI * E).ln())
}

/// Masked log-probabilities and entropy of the offloading distribution.
pub fn tape_categorical(t: &mut Tape, logits: Var, mask: &[bool]) -> (Var, Var) {
    let lp = t.masked_log_softmax(logits, Arc::new(mask.to_vec()));
    let p = t.exp(lp);
    let keep = Arc::new(mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect::<Vec<f64>>());
    let p = t.mat_mask(p, keep);
    let plp = t.mul(p, lp);
    let s = t.sum(plp);
    let ent = t.scale(s, -1.0);
    (lp, ent)
}

#[derive(Debug, Clone)]
struct Pending {
    fwd: Forward,
    lp_vel: Var,
    ent_vel: Var,
    lp_off: Vec<Var>,
    ent_off: Vec<Var>,
}

#[derive(Debug, Clone)]
struct Transition {
    step: Pending,
    reward: RewardBreakdown,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossReport {
    pub transitions: usize,
    pub loss_vel: f64,
    pub loss_off: f64,
    pub loss_critic: f64,
    pub entropy_vel: f64,
    pub entropy_off: f64,
    pub grad_norm: f64,
}

impl LossReport {
    pub fn merge(&mut self, o: &LossReport) {
        let n = (self.transitions + o.transitions) as f64;
        if n == 0.0 {
            return;
        }
        let (a, b) = (self.transitions as f64 / n, o.transitions as f64 / n);
        self.loss_vel = a * self.loss_vel + b * o.loss_vel;
        self.loss_off = a * self.loss_off + b * o.loss_off;
        self.loss_critic = a * self.loss_critic + b * o.loss_critic;
        self.entropy_vel = a * self.entropy_vel + b * o.entropy_vel;
        self.entropy_off = a * self.entropy_off + b * o.entropy_off;
        self.grad_norm = self.grad_norm.max(o.grad_norm);
        self.transitions += o.transitions;
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub id: usize,
    pub net: Network,
    pub opt: Adam,
    pub hidden: Vec<f64>,
    /// Gradients of the most recent update.
    pub last_grads: Option<Grads>,
    /// Bumped whenever parameters change.
    pub version: u64,
    pub v_max: f64,
    gamma: f64,
    entropy_coef: f64,
    window_len: usize,
    grad_clip: f64,
    reward_scale: f64,
    normalize_advantage: bool,
    lr: [f64; 4],
    window: Vec<Transition>,
    current: Option<Pending>,
    rng: ChaCha8Rng,
    pub worst_attention_dev: f64,
}

impl Agent {
    pub fn new(id: usize, cfg: &SimConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::new(cfg, &mut rng);
        let opt = Adam::new(&net.store);
        let tr = &cfg.training;
        Self {
            id,
            hidden: vec![0.0; net.hidden_size()],
            opt,
            net,
            last_grads: None,
            version: 0,
            v_max: cfg.sim.v_max,
            gamma: tr.gamma,
            entropy_coef: tr.entropy,
            window_len: tr.window,
            grad_clip: tr.grad_clip,
            reward_scale: tr.reward_scale,
            normalize_advantage: tr.normalize_advantage,
            lr: [tr.lr_features, tr.lr_vel, tr.lr_off, tr.lr_critic],
            window: Vec::new(),
            current: None,
            rng,
            worst_attention_dev: 0.0,
        }
    }

    pub fn begin_episode(&mut self) {
        self.hidden.iter_mut().for_each(|h| *h = 0.0);
        self.window.clear();
        self.current = None;
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    fn group_lr(&self, g: Group) -> f64 {
        match g {
            Group::Vel => self.lr[1],
            Group::Off => self.lr[2],
            Group::Critic => self.lr[3],
            _ => self.lr[0],
        }
    }

    /// Forward pass and velocity sample for this step. When learning and the
    /// window is full, first updates on it, bootstrapping from this state.
    pub fn act(&mut self, graph: &LocalGraph, learn: bool) -> ([f64; 2], Option<LossReport>) {
        let mut fwd = self.net.forward(graph, &self.hidden);
        let mut report = None;
        if learn && self.window.len() >= self.window_len {
            report = Some(self.update(Some(fwd.value_scalar())));
            fwd = self.net.forward(graph, &self.hidden);
        }
        self.worst_attention_dev = self.worst_attention_dev.max(Network::attention_row_deviation(&fwd));
        let mu = fwd.tape.value(fwd.mu);
        let ls = fwd.tape.value(fwd.log_sigma);
        let (pre, clipped, _) = sample_velocity([mu[0], mu[1]], [ls[0], ls[1]], self.v_max, &mut self.rng);
        let lp_vel = tape_gaussian_logprob(&mut fwd.tape, fwd.mu, fwd.log_sigma, pre);
        let ent_vel = tape_gaussian_entropy(&mut fwd.tape, fwd.log_sigma);
        self.hidden = fwd.h_final_values();
        self.current = Some(Pending { fwd, lp_vel, ent_vel, lp_off: Vec::new(), ent_off: Vec::new() });
        (clipped, report)
    }

    /// Samples an offloading slot from this step's policy.
    pub fn choose_offload(&mut self, mask: &[bool]) -> Result<usize> {
        let cur = self.current.as_mut().ok_or(Error::ExhaustedActions)?;
        if !mask.iter().any(|m| *m) {
            return Err(Error::ExhaustedActions);
        }
        let logits = cur.fwd.logits;
        let (lp, ent) = tape_categorical(&mut cur.fwd.tape, logits, mask);
        let p: Vec<f64> = cur.fwd.tape.value(lp).iter().zip(mask).map(|(l, &m)| if m { l.exp() } else { 0.0 }).collect();
        let slot = sample_categorical(&p, &mut self.rng);
        let pick = cur.fwd.tape.pick(lp, slot);
        cur.lp_off.push(pick);
        cur.ent_off.push(ent);
        Ok(slot)
    }

    /// Closes this step with its reward.
    pub fn record(&mut self, reward: RewardBreakdown) {
        if let Some(step) = self.current.take() {
            self.window.push(Transition { step, reward });
        }
    }

    /// Adds a late reward (end-of-episode settlements) to the last transition.
    pub fn add_to_last(&mut self, r: &RewardBreakdown) {
        if let Some(t) = self.window.last_mut() {
            t.reward.add(r);
        }
    }

    /// Actor-critic update on the stored window. `bootstrap` is `V(t+1)` for
    /// the last transition, `None` at episode end.
    pub fn update(&mut self, bootstrap: Option<f64>) -> LossReport {
        let n = self.window.len();
        if n == 0 {
            return LossReport::default();
        }
        let values: Vec<f64> = self.window.iter().map(|t| t.step.fwd.value_scalar()).collect();
        let n_off = self.window.iter().filter(|t| !t.step.lp_off.is_empty()).count();
        let mut grads = self.net.store.zero_grads();
        let mut rep = LossReport { transitions: n, ..Default::default() };
        let nf = n as f64;
        let adv: Vec<f64> = (0..n)
            .map(|i| {
                let done = i + 1 == n && bootstrap.is_none();
                let v_next = if i + 1 < n { values[i + 1] } else { bootstrap.unwrap_or(0.0) };
                advantage(self.window[i].reward.total() * self.reward_scale, self.gamma, v_next, values[i], done)
            })
            .collect();
        let actor_adv = if self.normalize_advantage && n > 1 {
            let m = adv.iter().sum::<f64>() / nf;
            let sd = (adv.iter().map(|a| (a - m).powi(2)).sum::<f64>() / nf).sqrt();
            adv.iter().map(|a| (a - m) / (sd + 1e-8)).collect()
        } else {
            adv.clone()
        };
        for i in 0..n {
            let target = values[i] + adv[i];
            let a = actor_adv[i];
            let tr = &mut self.window[i];
            let st = &mut tr.step;
            let t = &mut st.fwd.tape;
            let lp_vel = t.scalar(st.lp_vel);
            let ent_vel = t.scalar(st.ent_vel);
            rep.loss_vel += -lp_vel * a / nf;
            rep.loss_critic += (values[i] - target).powi(2) / nf;
            rep.entropy_vel += ent_vel / nf;

            let mut total = t.scale(st.lp_vel, -a / nf);
            let critic = t.scale(st.fwd.value, 2.0 * (values[i] - target) / nf);
            total = t.add(total, critic);
            let ev = t.scale(st.ent_vel, -self.entropy_coef / nf);
            total = t.add(total, ev);
            if !st.lp_off.is_empty() {
                let k = n_off as f64;
                for (&lp, &ent) in st.lp_off.iter().zip(&st.ent_off) {
                    rep.loss_off += -t.scalar(lp) * a / k;
                    rep.entropy_off += t.scalar(ent) / k;
                    let pl = t.scale(lp, -a / k);
                    total = t.add(total, pl);
                    let pe = t.scale(ent, -self.entropy_coef / k);
                    total = t.add(total, pe);
                }
            }
            t.backward(total, 1.0, &mut grads).expect("non-empty tape");
        }
        let norm = grads.norm();
        rep.grad_norm = norm;
        if grads.all_finite() {
            if self.grad_clip > 0.0 && norm > self.grad_clip {
                grads.scale(self.grad_clip / norm);
            }
            let lr = |g: Group| self.group_lr(g);
            let lrs: Vec<(Group, f64)> = Group::ALL.iter().map(|g| (*g, lr(*g))).collect();
            self.opt.step(&mut self.net.store, &grads, |g| lrs.iter().find(|x| x.0 == g).unwrap().1);
            self.version += 1;
            self.last_grads = Some(grads);
        } else {
            log::warn!("agent {}: non-finite gradient, update skipped", self.id);
        }
        self.window.clear();
        rep
    }

    /// Frozen action: no tape bookkeeping beyond the forward pass.
    pub fn value_estimate(&self, graph: &LocalGraph) -> f64 {
        self.net.forward(graph, &self.hidden).value_scalar()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantage_examples() {
        assert!((advantage(1.0, 0.95, 2.0, 2.0, false) - 0.9).abs() < 1e-12);
        assert_eq!(advantage(1.0, 0.95, 5.0, 1.0, true), 0.0);
        assert_eq!(advantage(0.0, 0.95, 0.0, 0.0, false), 0.0);
    }

    #[test]
    fn categorical_examples() {
        assert_eq!(categorical_probs(&[0.3, 1.0], &[false, true]).unwrap(), vec![0.0, 1.0]);
        let p = categorical_probs(&[0.0; 4], &[true; 4]).unwrap();
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
        assert!((categorical_entropy(&p) - 4f64.ln()).abs() < 1e-12);
        let p = categorical_probs(&[3f64.ln(), 0.0], &[true, true]).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
        assert!(matches!(categorical_probs(&[1.0], &[false]), Err(Error::ExhaustedActions)));
    }

    #[test]
    fn sampling_never_picks_masked_slot() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = categorical_probs(&[5.0, 0.0, 9.0], &[false, true, false]).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&p, &mut rng), 1);
        }
    }

    #[test]
    fn velocity_sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ls = [1e-3f64.ln(); 2];
        let (_, a, _) = sample_velocity([3.0, 4.0], ls, 20.0, &mut rng);
        assert!((a[0] - 3.0).abs() < 0.01 && (a[1] - 4.0).abs() < 0.01);
        let (_, a, _) = sample_velocity([30.0, 40.0], ls, 20.0, &mut rng);
        assert!((a[0].hypot(a[1]) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn tape_logprob_matches_density() {
        let mut t = Tape::new();
        let mu = t.input(1, 2, vec![0.5, -1.0]);
        let ls = t.input(1, 2, vec![0.2, -0.3]);
        let lp = tape_gaussian_logprob(&mut t, mu, ls, [1.0, 0.0]);
        let expect = gaussian_logprob([1.0, 0.0], [0.5, -1.0], [0.2, -0.3]);
        assert!((t.scalar(lp) - expect).abs() < 1e-12);
        // independent density evaluation
        let dens = |x: f64, m: f64, s: f64| (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
        let direct = (dens(1.0, 0.5, 0.2f64.exp()) * dens(0.0, -1.0, (-0.3f64).exp())).ln();
        assert!((expect - direct).abs() < 1e-12);
    }

    #[test]
    fn reward_examples() {
        let w = RewardWeights { alpha: 0.5, beta: 0.5, lambda: 10.0, eta: 0.1, at_admission: false, team: false };
        let s = RewardScales { time: 1.0, energy: 1.0 };
        let out = StepOutcome { energy: vec![0.0], covered_by: vec![7], ..Default::default() };
        let r = reward(0, &out, &w, &s);
        assert!((r.coverage - 0.7).abs() < 1e-12);
        assert_eq!(r.deadline, 0.0);
        let out = StepOutcome { energy: vec![0.0], covered_by: vec![0], ..Default::default() };
        let r = reward(0, &out, &w, &s);
        assert_eq!(r.total(), r.performance);
    }

    #[test]
    fn admission_and_team_credit() {
        use crate::sim::Admission;
        let s = RewardScales { time: 1.0, energy: 1.0 };
        let out = StepOutcome {
            energy: vec![0.0, 0.0],
            covered_by: vec![0, 0],
            admitted: vec![
                Admission { task_id: 1, serving: 0, t_total: 4.0, overshoot: 0.5 },
                Admission { task_id: 2, serving: 1, t_total: 2.0, overshoot: 0.0 },
            ],
            ..Default::default()
        };
        let own = RewardWeights { alpha: 0.5, beta: 0.5, lambda: 10.0, eta: 0.1, at_admission: true, team: false };
        let r0 = reward(0, &out, &own, &s);
        assert!((r0.deadline + 5.0).abs() < 1e-12);
        assert!((r0.performance + 2.0).abs() < 1e-12);
        assert_eq!(reward(1, &out, &own, &s).deadline, 0.0);
        let team = RewardWeights { team: true, ..own };
        for k in 0..2 {
            let r = reward(k, &out, &team, &s);
            assert!((r.deadline + 2.5).abs() < 1e-12);
            assert!((r.performance + 1.5).abs() < 1e-12);
        }
        let late = RewardWeights { at_admission: false, ..own };
        assert_eq!(reward(0, &out, &late, &s).total(), 0.0);
    }
}
