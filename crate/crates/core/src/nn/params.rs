//! Named parameter matrices, gradient buffers, Adam and the checkpoint format.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Gat,
    Mlp,
    Gru,
    Shared,
    Vel,
    Off,
    Critic,
}

impl Group {
    pub const ALL: [Group; 7] =
        [Group::Gat, Group::Mlp, Group::Gru, Group::Shared, Group::Vel, Group::Off, Group::Critic];

    /// Feature-extraction groups (graph encoder, recurrent cell, trunk).
    pub fn is_feature(self) -> bool {
        matches!(self, Group::Gat | Group::Mlp | Group::Gru | Group::Shared)
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Gat => "gat",
            Group::Mlp => "mlp",
            Group::Gru => "gru",
            Group::Shared => "shared",
            Group::Vel => "vel",
            Group::Off => "off",
            Group::Critic => "critic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub group: Group,
    pub value: Arc<Vec<f64>>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, value: Vec<f64>, group: Group) -> ParamId {
        assert_eq!(value.len(), rows * cols, "parameter {name} shape mismatch");
        self.params.push(Param { name: name.to_string(), rows, cols, group, value: Arc::new(value) });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform matrix.
    pub fn add_glorot(&mut self, name: &str, rows: usize, cols: usize, group: Group, rng: &mut impl Rng) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let value = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        self.add(name, rows, cols, value, group)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize, group: Group) -> ParamId {
        self.add(name, rows, cols, vec![0.0; rows * cols], group)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        Arc::make_mut(&mut self.params[id.0].value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in(&self, group: Group) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.group == group).map(|(id, _)| id).collect()
    }

    pub fn count(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn group_len(&self, group: Group) -> usize {
        self.params.iter().filter(|p| p.group == group).map(Param::len).sum()
    }

    /// Concatenation of every parameter of `group` in declaration order.
    pub fn flatten_group(&self, group: Group) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.group_len(group));
        for p in self.params.iter().filter(|p| p.group == group) {
            out.extend_from_slice(&p.value);
        }
        out
    }

    pub fn load_group(&mut self, group: Group, flat: &[f64]) -> Result<()> {
        if flat.len() != self.group_len(group) {
            return Err(Error::Checkpoint(format!(
                "group {} expects {} values, got {}",
                group.name(),
                self.group_len(group),
                flat.len()
            )));
        }
        let mut off = 0;
        for p in self.params.iter_mut().filter(|p| p.group == group) {
            let n = p.len();
            Arc::make_mut(&mut p.value).copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Grads {
        Grads { g: self.params.iter().map(|p| vec![0.0; p.len()]).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }
}

/// Gradient buffers paired with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    g: Vec<Vec<f64>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.g[id.0]
    }

    pub(crate) fn slot_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.g[id.0]
    }

    pub fn accumulate(&mut self, id: ParamId, d: &[f64]) {
        self.g[id.0].iter_mut().zip(d).for_each(|(a, b)| *a += b);
    }

    pub fn zero(&mut self) {
        self.g.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x = 0.0));
    }

    pub fn scale(&mut self, s: f64) {
        self.g.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x *= s));
    }

    pub fn flatten_group(&self, store: &ParamStore, group: Group) -> Vec<f64> {
        let mut out = Vec::with_capacity(store.group_len(group));
        for (id, p) in store.iter() {
            if p.group == group {
                out.extend_from_slice(&self.g[id.0]);
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.g.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.g.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Adam with one learning rate per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros(), v: zeros(), t: 0 }
    }

    /// One descent step; `lr(group)` gives the rate for each group.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: impl Fn(Group) -> f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..store.params.len() {
            let rate = lr(store.params[i].group);
            if rate == 0.0 {
                continue;
            }
            let g = &grads.g[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let w = Arc::make_mut(&mut store.params[i].value);
            for j in 0..w.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                w[j] -= rate * (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
            }
        }
    }
}

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"UVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializes a store: magic, version, parameter count, then per parameter
/// `(group u8, rows u32, cols u32)`, then all values as little-endian `f64`
/// in declaration order.
pub fn write_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + store.len() * 9 + store.count() * 8);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        out.push(Group::ALL.iter().position(|g| *g == p.group).unwrap() as u8);
        out.extend_from_slice(&(p.rows as u32).to_le_bytes());
        out.extend_from_slice(&(p.cols as u32).to_le_bytes());
    }
    for (_, p) in store.iter() {
        for v in p.value.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Loads values into a store of identical layout.
pub fn read_checkpoint(store: &mut ParamStore, bytes: &[u8]) -> Result<()> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated checkpoint"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    if u32_at(take(4)?) != CHECKPOINT_VERSION {
        return Err(bad("unsupported version"));
    }
    let n = u32_at(take(4)?) as usize;
    if n != store.len() {
        return Err(bad("parameter count mismatch"));
    }
    for i in 0..n {
        let g = take(1)?[0] as usize;
        let rows = u32_at(take(4)?) as usize;
        let cols = u32_at(take(4)?) as usize;
        let p = &store.params[i];
        if Group::ALL.get(g) != Some(&p.group) || rows != p.rows || cols != p.cols {
            return Err(Error::Checkpoint(format!("shape table mismatch at parameter {i} ({})", p.name)));
        }
    }
    for i in 0..n {
        let len = store.params[i].len();
        let raw = take(len * 8)?;
        let w = Arc::make_mut(&mut store.params[i].value);
        for (j, c) in raw.chunks_exact(8).enumerate() {
            w[j] = f64::from_le_bytes(c.try_into().unwrap());
        }
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store() -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        s.add_glorot("w", 3, 4, Group::Vel, &mut rng);
        s.add_zeros("b", 1, 4, Group::Vel);
        s.add_glorot("c", 2, 2, Group::Critic, &mut rng);
        s
    }

    #[test]
    fn glorot_bound() {
        let s = store();
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(s.values(ParamId(0)).iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let s = store();
        let bytes = write_checkpoint(&s);
        let mut t = store();
        t.values_mut(ParamId(0)).iter_mut().for_each(|v| *v = 0.0);
        read_checkpoint(&mut t, &bytes).unwrap();
        assert_eq!(s, t);
        assert!(read_checkpoint(&mut t, &bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn group_flatten_roundtrip() {
        let mut s = store();
        let flat = s.flatten_group(Group::Vel);
        assert_eq!(flat.len(), 16);
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        s.load_group(Group::Vel, &doubled).unwrap();
        assert_eq!(s.flatten_group(Group::Vel), doubled);
        assert!(s.load_group(Group::Vel, &doubled[1..]).is_err());
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut s = store();
        let before = s.values(ParamId(1)).to_vec();
        let mut g = s.zero_grads();
        g.accumulate(ParamId(1), &[1.0, -1.0, 0.0, 2.0]);
        let mut opt = Adam::new(&s);
        opt.step(&mut s, &g, |_| 0.1);
        let after = s.values(ParamId(1));
        assert!(after[0] < before[0] && after[1] > before[1] && after[2] == before[2]);
    }

    #[test]
    fn shared_values_survive_update() {
        let mut s = store();
        let snapshot = Arc::clone(&s.get(ParamId(0)).value);
        s.values_mut(ParamId(0))[0] = 42.0;
        assert_ne!(snapshot[0], 42.0);
    }
}
