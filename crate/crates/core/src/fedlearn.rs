//! Decentralized federated averaging between UAV agents: reputation,
//! gradient-ranked bit widths, linear quantization, wire format and
//! asynchronous best-effort aggregation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{FlConfig, SimConfig};
use crate::error::{Error, Result};
use crate::marl::Agent;
use crate::nn::Group;
use crate::radio;
use crate::sim::{speed, StepOutcome, World};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReputationRecord {
    pub uav: usize,
    pub tasks_assigned: u64,
    pub tasks_completed: u64,
    pub fl_attempts: u64,
    pub fl_successes: u64,
    pub rep: f64,
    pub rep_prev: f64,
}

impl ReputationRecord {
    pub fn new(uav: usize) -> Self {
        Self { uav, tasks_assigned: 0, tasks_completed: 0, fl_attempts: 0, fl_successes: 0, rep: 1.0, rep_prev: 1.0 }
    }

    /// Task success ratio; 1 before any task has finished.
    pub fn succ(&self) -> f64 {
        if self.tasks_assigned == 0 {
            1.0
        } else {
            self.tasks_completed as f64 / self.tasks_assigned as f64
        }
    }

    /// Exchange success ratio; 1 before any exchange was attempted.
    pub fn stab(&self) -> f64 {
        if self.fl_attempts == 0 {
            1.0
        } else {
            self.fl_successes as f64 / self.fl_attempts as f64
        }
    }

    pub fn update(&mut self, alpha_succ: f64, alpha_stab: f64, rho: f64) {
        let raw = alpha_succ * self.succ() + alpha_stab * self.stab();
        self.rep_prev = self.rep;
        self.rep = (rho * self.rep_prev + (1.0 - rho) * raw).clamp(0.0, 1.0);
    }
}

/// Raw reputation from the two ratios.
pub fn raw_reputation(succ: f64, stab: f64, alpha_succ: f64, alpha_stab: f64) -> f64 {
    alpha_succ * succ + alpha_stab * stab
}

pub fn smooth_reputation(prev: f64, raw: f64, rho: f64) -> f64 {
    rho * prev + (1.0 - rho) * raw
}

/// Active UAVs whose air-to-air RSSI at `k` reaches the exchange threshold.
pub fn select_fl_neighbors(k: usize, w: &World) -> Vec<usize> {
    let r = &w.radio;
    (0..w.num_uavs())
        .filter(|&j| {
            if j == k || !w.uavs[j].active || !w.uavs[k].active {
                return false;
            }
            let d = radio::distance(w.uavs[k].pos, w.uavs[j].pos);
            r.connected(d) && r.inter_rssi(d.max(1e-9)).is_ok_and(|p| p >= r.rssi_fl)
        })
        .collect()
}

/// Aggregation rate in Hz at speed `v`.
pub fn aggregation_frequency(v: f64, f_base: f64, alpha_mobility: f64) -> f64 {
    f_base * (1.0 + alpha_mobility * v)
}

/// Bit width per parameter from its gradient-magnitude rank: the largest
/// magnitude gets `b_max`, the smallest `b_min`; ties rank by index.
pub fn bit_width_schedule(grads: &[f64], b_min: u8, b_max: u8) -> Vec<u8> {
    let n = grads.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![b_max];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| grads[b].abs().total_cmp(&grads[a].abs()).then(a.cmp(&b)));
    let span = (b_max - b_min) as usize;
    let mut bits = vec![0u8; n];
    for (r0, &i) in order.iter().enumerate() {
        // b_min + floor((1 - r0/(n-1)) * span), in exact integer arithmetic
        bits[i] = b_min + (((n - 1 - r0) * span) / (n - 1)) as u8;
    }
    bits
}

pub const FULL_PRECISION_BITS: u8 = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlob {
    pub group: Group,
    pub theta_min: f64,
    pub theta_max: f64,
    pub bits: Vec<u8>,
    pub codes: Vec<u32>,
    /// Uniform 32-bit codes with no per-parameter width table.
    pub full_precision: bool,
}

impl QuantizedBlob {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Every parameter equal; codes are all zero.
    pub fn collapsed(&self) -> bool {
        self.theta_max == self.theta_min
    }

    pub fn total_bits(&self) -> u64 {
        self.bits.iter().map(|b| *b as u64).sum()
    }
}

fn levels(bits: u8) -> f64 {
    ((1u64 << bits) - 1) as f64
}

pub fn quantize(group: Group, params: &[f64], bits: &[u8]) -> Result<QuantizedBlob> {
    assert_eq!(params.len(), bits.len());
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("quantize {}", group.name())));
    }
    let lo = params.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = params.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if params.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    let range = hi - lo;
    let codes = params
        .iter()
        .zip(bits)
        .map(|(&v, &b)| if range == 0.0 { 0 } else { (((v - lo) / range) * levels(b)).round() as u32 })
        .collect();
    Ok(QuantizedBlob {
        group,
        theta_min: lo,
        theta_max: hi,
        bits: bits.to_vec(),
        codes,
        full_precision: bits.iter().all(|b| *b == FULL_PRECISION_BITS),
    })
}

pub fn quantize_full(group: Group, params: &[f64]) -> Result<QuantizedBlob> {
    quantize(group, params, &vec![FULL_PRECISION_BITS; params.len()])
}

pub fn dequantize(blob: &QuantizedBlob) -> Vec<f64> {
    let range = blob.theta_max - blob.theta_min;
    blob.codes
        .iter()
        .zip(&blob.bits)
        .map(|(&c, &b)| if range == 0.0 { blob.theta_min } else { blob.theta_min + c as f64 / levels(b) * range })
        .collect()
}

/// Worst-case reconstruction error of one parameter.
pub fn quantization_bound(blob: &QuantizedBlob, i: usize) -> f64 {
    (blob.theta_max - blob.theta_min) / (2.0 * levels(blob.bits[i]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlMessage {
    pub sender: usize,
    pub blobs: Vec<QuantizedBlob>,
    pub rep: f64,
}

pub const HEADER_BYTES: usize = 16;
pub const REP_BYTES: usize = 8;
pub const BOUNDS_BYTES: usize = 16;
pub const WIRE_MAGIC: [u8; 4] = *b"UVFL";
pub const WIRE_VERSION: u32 = 1;

fn blob_payload_bytes(b: &QuantizedBlob) -> usize {
    let value_bytes = b.total_bits().div_ceil(8) as usize;
    let width_bytes = if b.full_precision { 0 } else { (b.len() * 4).div_ceil(8) };
    value_bytes + width_bytes
}

/// Accounted message size: packed value codes and 4-bit width codes (each
/// rounded up to whole bytes per blob), both bounds per blob, reputation and
/// header.
pub fn comm_cost(msg: &FlMessage) -> usize {
    msg.blobs.iter().map(|b| blob_payload_bytes(b) + BOUNDS_BYTES).sum::<usize>() + REP_BYTES + HEADER_BYTES
}

struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    n: u32,
}

impl BitWriter {
    fn new() -> Self {
        Self { out: Vec::new(), acc: 0, n: 0 }
    }

    fn put(&mut self, value: u32, bits: u8) {
        for i in (0..bits).rev() {
            self.acc = (self.acc << 1) | ((value >> i) & 1) as u64;
            self.n += 1;
            if self.n == 8 {
                self.out.push(self.acc as u8);
                self.acc = 0;
                self.n = 0;
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            self.out.push((self.acc << (8 - self.n)) as u8);
        }
        self.out
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    bit: usize,
}

impl<'a> BitReader<'a> {
    fn get(&mut self, bits: u8) -> Result<u32> {
        let mut v = 0u32;
        for _ in 0..bits {
            let byte = *self.data.get(self.bit / 8).ok_or_else(|| Error::Wire("truncated code stream".into()))?;
            v = (v << 1) | ((byte >> (7 - self.bit % 8)) & 1) as u32;
            self.bit += 1;
        }
        Ok(v)
    }
}

const NP_MASK: u32 = (1 << 28) - 1;

/// Serializes a message. Layout (little-endian): magic, version, sender and
/// blob count as `u32`; per blob a `u32` holding `n_p` in bits 0–27, the
/// group in bits 28–30 and the full-precision flag in bit 31, then `θ_min`,
/// `θ_max` as `f64`, the 4-bit width codes `b − 1` packed MSB-first (absent
/// for full precision) and the value codes packed MSB-first; finally the
/// sender reputation as `f64`.
pub fn encode(msg: &FlMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(comm_cost(msg) + 4 * msg.blobs.len());
    out.extend_from_slice(&WIRE_MAGIC);
    out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
    out.extend_from_slice(&(msg.sender as u32).to_le_bytes());
    out.extend_from_slice(&(msg.blobs.len() as u32).to_le_bytes());
    for b in &msg.blobs {
        assert!(b.len() as u32 <= NP_MASK, "blob too large for the wire format");
        let g = Group::ALL.iter().position(|x| *x == b.group).unwrap() as u32;
        let word = b.len() as u32 | (g << 28) | if b.full_precision { 1 << 31 } else { 0 };
        out.extend_from_slice(&word.to_le_bytes());
        out.extend_from_slice(&b.theta_min.to_le_bytes());
        out.extend_from_slice(&b.theta_max.to_le_bytes());
        if !b.full_precision {
            let mut w = BitWriter::new();
            for &bits in &b.bits {
                w.put((bits - 1) as u32, 4);
            }
            out.extend(w.finish());
        }
        let mut w = BitWriter::new();
        for (&c, &bits) in b.codes.iter().zip(&b.bits) {
            w.put(c, bits);
        }
        out.extend(w.finish());
    }
    out.extend_from_slice(&msg.rep.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<FlMessage> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| Error::Wire("truncated message".into()))?;
        pos += n;
        Ok(s)
    };
    let u32_of = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let f64_of = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
    if take(4)? != WIRE_MAGIC {
        return Err(Error::Wire("bad magic".into()));
    }
    if u32_of(take(4)?) != WIRE_VERSION {
        return Err(Error::Wire("unsupported version".into()));
    }
    let sender = u32_of(take(4)?) as usize;
    let count = u32_of(take(4)?) as usize;
    let mut blobs = Vec::with_capacity(count);
    for _ in 0..count {
        let word = u32_of(take(4)?);
        let n = (word & NP_MASK) as usize;
        let group = *Group::ALL
            .get(((word >> 28) & 0x7) as usize)
            .ok_or_else(|| Error::Wire("unknown group".into()))?;
        let full = word >> 31 == 1;
        let theta_min = f64_of(take(8)?);
        let theta_max = f64_of(take(8)?);
        let bits = if full {
            vec![FULL_PRECISION_BITS; n]
        } else {
            let raw = take((n * 4).div_ceil(8))?;
            let mut r = BitReader { data: raw, bit: 0 };
            (0..n).map(|_| r.get(4).map(|c| c as u8 + 1)).collect::<Result<Vec<u8>>>()?
        };
        let total: u64 = bits.iter().map(|b| *b as u64).sum();
        let raw = take(total.div_ceil(8) as usize)?;
        let mut r = BitReader { data: raw, bit: 0 };
        let codes = bits.iter().map(|&b| r.get(b)).collect::<Result<Vec<u32>>>()?;
        blobs.push(QuantizedBlob { group, theta_min, theta_max, bits, codes, full_precision: full });
    }
    let rep = f64_of(take(8)?);
    if pos != bytes.len() {
        return Err(Error::Wire("trailing bytes".into()));
    }
    Ok(FlMessage { sender, blobs, rep })
}

/// Normalized reputation weights, own entry first. All-zero reputations
/// fall back to uniform weights.
pub fn aggregation_weights(reps: &[f64]) -> Vec<f64> {
    let z: f64 = reps.iter().sum();
    if z <= 0.0 {
        return vec![1.0 / reps.len() as f64; reps.len()];
    }
    reps.iter().map(|r| r / z).collect()
}

/// Reputation-weighted average of the local vector and every received one.
pub fn aggregate(local: &[f64], received: &[(Vec<f64>, f64)], own_rep: f64) -> Vec<f64> {
    if received.is_empty() {
        return local.to_vec();
    }
    let mut reps = vec![own_rep];
    reps.extend(received.iter().map(|r| r.1));
    let w = aggregation_weights(&reps);
    let mut out: Vec<f64> = local.iter().map(|v| v * w[0]).collect();
    for ((params, _), wj) in received.iter().zip(&w[1..]) {
        assert_eq!(params.len(), local.len(), "aggregated vectors differ in length");
        out.iter_mut().zip(params).for_each(|(o, p)| *o += wj * p);
    }
    out
}

/// Groups exchanged under `cfg`, in wire order.
pub fn exchanged_groups(cfg: &FlConfig) -> Vec<Group> {
    Group::ALL.iter().copied().filter(|g| cfg.aggregate_features || !g.is_feature()).collect()
}

/// Builds an agent's outgoing message.
pub fn build_message(agent: &Agent, rep: f64, cfg: &FlConfig) -> Result<FlMessage> {
    let store = &agent.net.store;
    let mut blobs = Vec::new();
    for g in exchanged_groups(cfg) {
        if store.group_len(g) == 0 {
            continue;
        }
        let params = store.flatten_group(g);
        let blob = if cfg.quantize {
            let grads = match &agent.last_grads {
                Some(gr) => gr.flatten_group(store, g),
                None => vec![0.0; params.len()],
            };
            quantize(g, &params, &bit_width_schedule(&grads, cfg.b_min, cfg.b_max))?
        } else {
            quantize_full(g, &params)?
        };
        blobs.push(blob);
    }
    Ok(FlMessage { sender: agent.id, blobs, rep })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlStats {
    pub rounds: u64,
    pub attempts: u64,
    pub successes: u64,
    pub bytes: u64,
    /// Bytes the same exchanges would have cost at full precision.
    pub bytes_full: u64,
    pub worst_weight_dev: f64,
}

#[derive(Debug, Clone)]
struct Cached {
    version: u64,
    rep: f64,
    bytes: Vec<u8>,
    cost: usize,
    cost_full: usize,
}

/// Per-UAV federated state driven by the world clock.
#[derive(Debug, Clone)]
pub struct Federation {
    pub cfg: FlConfig,
    pub timeout: f64,
    pub reputations: Vec<ReputationRecord>,
    next_round: Vec<f64>,
    cache: Vec<Option<Cached>>,
    /// Bytes sent by each UAV this episode.
    pub bytes_sent: Vec<u64>,
    pub stats: FlStats,
    rng: ChaCha8Rng,
}

impl Federation {
    pub fn new(cfg: &SimConfig, seed: u64) -> Self {
        let k = cfg.sim.num_uavs;
        Self {
            cfg: cfg.fl.clone(),
            timeout: cfg.fl_timeout(),
            reputations: (0..k).map(ReputationRecord::new).collect(),
            next_round: vec![1.0 / cfg.fl.f_base; k],
            cache: vec![None; k],
            bytes_sent: vec![0; k],
            stats: FlStats::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn begin_episode(&mut self) {
        let first = 1.0 / self.cfg.f_base;
        self.next_round.iter_mut().for_each(|t| *t = first);
        self.bytes_sent.iter_mut().for_each(|b| *b = 0);
    }

    /// Task bookkeeping and reputation smoothing after a world step.
    pub fn observe(&mut self, out: &StepOutcome) {
        for c in &out.completions {
            let k = match &c.record {
                Some(r) => r.executor(),
                None if c.serving < self.reputations.len() => c.serving,
                None => continue,
            };
            self.reputations[k].tasks_assigned += 1;
            if c.met {
                self.reputations[k].tasks_completed += 1;
            }
        }
        let (a, b, rho) = (self.cfg.alpha_succ, self.cfg.alpha_stab, self.cfg.rho);
        self.reputations.iter_mut().for_each(|r| r.update(a, b, rho));
    }

    fn rep_of(&self, k: usize) -> f64 {
        if self.cfg.reputation {
            self.reputations[k].rep
        } else {
            1.0
        }
    }

    fn message_of(&mut self, agent: &Agent) -> Result<Cached> {
        let k = agent.id;
        let rep = self.rep_of(k);
        if let Some(c) = &self.cache[k] {
            if c.version == agent.version && c.rep == rep {
                return Ok(c.clone());
            }
        }
        let msg = build_message(agent, rep, &self.cfg)?;
        let cost = comm_cost(&msg);
        let cost_full = msg.blobs.iter().map(|b| 4 * b.len() + BOUNDS_BYTES).sum::<usize>() + REP_BYTES + HEADER_BYTES;
        let c = Cached { version: agent.version, rep, bytes: encode(&msg), cost, cost_full };
        self.cache[k] = Some(c.clone());
        Ok(c)
    }

    /// Runs every aggregation round due at the world's clock.
    pub fn tick(&mut self, w: &World, agents: &mut [Agent]) -> Result<()> {
        if !self.cfg.enabled {
            return Ok(());
        }
        for k in 0..agents.len() {
            if !w.uavs[k].active || w.clock < self.next_round[k] {
                continue;
            }
            self.stats.rounds += 1;
            let mut received: Vec<FlMessage> = Vec::new();
            for j in select_fl_neighbors(k, w) {
                let msg = self.message_of(&agents[j])?;
                let d = radio::distance(w.uavs[k].pos, w.uavs[j].pos).max(1e-9);
                let rate = w.radio.inter_capacity(d)?;
                let transfer = msg.cost as f64 * 8.0 / rate;
                let dropped = self.cfg.drop_prob > 0.0 && self.rng.random::<f64>() < self.cfg.drop_prob;
                self.reputations[j].fl_attempts += 1;
                self.stats.attempts += 1;
                self.stats.bytes += msg.cost as u64;
                self.stats.bytes_full += msg.cost_full as u64;
                self.bytes_sent[j] += msg.cost as u64;
                if transfer <= self.timeout && !dropped {
                    self.reputations[j].fl_successes += 1;
                    self.stats.successes += 1;
                    received.push(decode(&msg.bytes)?);
                }
            }
            if !received.is_empty() {
                let mut reps = vec![self.rep_of(k)];
                reps.extend(received.iter().map(|m| m.rep));
                let dev = (aggregation_weights(&reps).iter().sum::<f64>() - 1.0).abs();
                self.stats.worst_weight_dev = self.stats.worst_weight_dev.max(dev);
                let own = self.rep_of(k);
                let store = &mut agents[k].net.store;
                for g in exchanged_groups(&self.cfg) {
                    if store.group_len(g) == 0 {
                        continue;
                    }
                    let theirs: Vec<(Vec<f64>, f64)> = received
                        .iter()
                        .filter_map(|m| m.blobs.iter().find(|b| b.group == g).map(|b| (dequantize(b), m.rep)))
                        .collect();
                    let merged = aggregate(&store.flatten_group(g), &theirs, own);
                    store.load_group(g, &merged)?;
                }
                agents[k].version += 1;
            }
            let f = aggregation_frequency(speed(w.uavs[k].vel), self.cfg.f_base, self.cfg.alpha_mobility);
            self.next_round[k] = w.clock + 1.0 / f;
        }
        Ok(())
    }
}
