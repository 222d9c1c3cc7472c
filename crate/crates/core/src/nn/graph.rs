//! Per-UAV dual-layer local graph and the attention/transfer weight rules.

use std::sync::Arc;

pub const COOP_FEATURES: usize = 10;
pub const COOP_EDGE_FEATURES: usize = 4;
pub const SERV_FEATURES: usize = 10;
pub const SERV_EDGE_FEATURES: usize = 3;

/// Node/edge tensors of one layer. Node 0 is always the owning UAV; edge
/// features are stored densely as `n × n × f` with `mask[i·n + j]` marking
/// which pairs exist (self loops always do).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    pub n: usize,
    pub node_dim: usize,
    pub edge_dim: usize,
    pub x: Vec<f64>,
    pub e: Vec<f64>,
    pub mask: Arc<Vec<bool>>,
}

impl LayerGraph {
    /// Single-node graph around `x`.
    pub fn singleton(x: Vec<f64>, edge_dim: usize) -> Self {
        let node_dim = x.len();
        Self { n: 1, node_dim, edge_dim, x, e: vec![0.0; edge_dim], mask: Arc::new(vec![true]) }
    }

    pub fn new(n: usize, node_dim: usize, edge_dim: usize) -> Self {
        let mut mask = vec![false; n * n];
        for i in 0..n {
            mask[i * n + i] = true;
        }
        Self {
            n,
            node_dim,
            edge_dim,
            x: vec![0.0; n * node_dim],
            e: vec![0.0; n * n * edge_dim],
            mask: Arc::new(mask),
        }
    }

    pub fn set_node(&mut self, i: usize, feats: &[f64]) {
        assert_eq!(feats.len(), self.node_dim);
        self.x[i * self.node_dim..(i + 1) * self.node_dim].copy_from_slice(feats);
    }

    /// Adds the undirected edge `{i, j}` with the same features both ways.
    pub fn set_edge(&mut self, i: usize, j: usize, feats: &[f64]) {
        assert_eq!(feats.len(), self.edge_dim);
        let n = self.n;
        let mask = Arc::make_mut(&mut self.mask);
        for (a, b) in [(i, j), (j, i)] {
            mask[a * n + b] = true;
            let off = (a * n + b) * self.edge_dim;
            self.e[off..off + self.edge_dim].copy_from_slice(feats);
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }
}

/// Cooperation layer, service layer and the urgency transfer row that feeds
/// service-layer embeddings into the owning UAV's cooperation node.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGraph {
    pub coop: LayerGraph,
    pub serv: LayerGraph,
    /// Weights over service nodes (length `serv.n`); the UAV's own service
    /// node has weight 0. All-zero when nothing is covered.
    pub transfer: Vec<f64>,
    /// UAV index of every cooperation node (node 0 is the owner).
    pub coop_ids: Vec<usize>,
    /// Device index of every service node after the first.
    pub serv_ids: Vec<usize>,
}

/// Urgency weights `exp(−γ c̄_m)` normalized over covered devices. `urgency`
/// holds the most-urgent remaining deadline per device, `+∞` for an empty
/// queue (weight 0). Returns the zero row when no covered device has weight.
pub fn transfer_matrix(covered: &[bool], urgency: &[f64], gamma: f64) -> Vec<f64> {
    assert_eq!(covered.len(), urgency.len());
    if gamma == 0.0 {
        let n = covered.iter().filter(|c| **c).count() as f64;
        return covered.iter().map(|&c| if c { 1.0 / n } else { 0.0 }).collect();
    }
    // Shift by the most urgent entry so large deadlines cannot underflow.
    let min_u = covered
        .iter()
        .zip(urgency)
        .filter(|(c, u)| **c && u.is_finite())
        .map(|(_, u)| *u)
        .fold(f64::INFINITY, f64::min);
    if !min_u.is_finite() {
        return vec![0.0; covered.len()];
    }
    let shifted: Vec<f64> = covered
        .iter()
        .zip(urgency)
        .map(|(&c, &u)| if c { (-gamma * (u - min_u)).exp() } else { 0.0 })
        .collect();
    let z: f64 = shifted.iter().sum();
    if z == 0.0 {
        return vec![0.0; covered.len()];
    }
    shifted.iter().map(|v| v / z).collect()
}

/// Masked softmax of `scores / √d_k`, one row per query. Every row must
/// admit at least its own entry.
pub fn attention_weights(scores: &[f64], mask: &[bool], n_cols: usize, d_k: usize) -> Vec<f64> {
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut out = vec![0.0; scores.len()];
    for (i, row) in scores.chunks(n_cols).enumerate() {
        let m = &mask[i * n_cols..(i + 1) * n_cols];
        let mx = row
            .iter()
            .zip(m)
            .filter(|(_, k)| **k)
            .map(|(s, _)| s * scale)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..n_cols {
            if m[j] {
                let v = (row[j] * scale - mx).exp();
                out[i * n_cols + j] = v;
                z += v;
            }
        }
        for o in &mut out[i * n_cols..(i + 1) * n_cols] {
            *o /= z;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_examples() {
        assert_eq!(attention_weights(&[0.3], &[true], 1, 1), vec![1.0]);
        assert_eq!(attention_weights(&[2.0, 2.0], &[true, true], 2, 16), vec![0.5, 0.5]);
        let w = attention_weights(&[1.0, 0.0], &[true, true], 2, 1);
        assert!((w[0] - 0.7311).abs() < 1e-4 && (w[1] - 0.2689).abs() < 1e-4);
        let w = attention_weights(&[1.0, 9.0], &[true, false], 2, 1);
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn transfer_examples() {
        assert_eq!(transfer_matrix(&[true], &[3.0], 0.5), vec![1.0]);
        let w = transfer_matrix(&[true, true], &[0.0, 2.0], 0.5);
        assert!((w[0] - 0.7311).abs() < 1e-4 && (w[1] - 0.2689).abs() < 1e-4);
        let w = transfer_matrix(&[true, true, true, false], &[1.0, 5.0, 9.0, 0.0], 0.0);
        assert!(w[..3].iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15) && w[3] == 0.0);
        assert_eq!(transfer_matrix(&[false, false], &[1.0, 1.0], 0.5), vec![0.0, 0.0]);
        let w = transfer_matrix(&[true, true], &[f64::INFINITY, 4.0], 0.5);
        assert_eq!(w, vec![0.0, 1.0]);
        assert_eq!(transfer_matrix(&[true], &[f64::INFINITY], 0.5), vec![0.0]);
    }

    #[test]
    fn large_urgency_does_not_underflow() {
        let w = transfer_matrix(&[true, true], &[5000.0, 5002.0], 0.5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn edges_are_symmetric() {
        let mut g = LayerGraph::new(3, 2, 1);
        g.set_edge(0, 2, &[0.7]);
        assert!(g.has_edge(2, 0) && g.has_edge(0, 2) && !g.has_edge(0, 1));
        assert!(g.has_edge(1, 1));
    }
}
