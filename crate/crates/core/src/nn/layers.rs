//! Dense, graph-attention and recurrent layers built on the tape.

use std::sync::Arc;

use rand::Rng;

use super::params::{Group, ParamId, ParamStore};
use super::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, group: Group, rng: &mut impl Rng) -> Self {
        let w = store.add_glorot(&format!("{name}.w"), fan_in, fan_out, group, rng);
        let b = store.add_zeros(&format!("{name}.b"), 1, fan_out, group);
        Self { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = t.param(store, self.w);
        let b = t.param(store, self.b);
        t.affine(x, w, b)
    }
}

/// Stack of ReLU layers followed by a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: &[usize],
        output: usize,
        group: Group,
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], group, rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, mut x: Var) -> Var {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(t, store, x);
            if i < last {
                x = t.relu(x);
            }
        }
        x
    }
}

/// One multi-head graph-attention layer.
///
/// Node projections `Z = H W` are split column-wise into heads. For head `h`
/// the score of edge `i → j` is `q_i · (k_j + e_ij W_e) / √d_k` with
/// `q = Z W_q` and `k = Z W_k`; the head output is the attention-weighted sum
/// of the head's slice of `Z`. An optional cross-layer message `M H' W_x` is
/// added before the ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub w: ParamId,
    pub wq: ParamId,
    pub wk: ParamId,
    pub we: ParamId,
    pub w_cross: Option<ParamId>,
    pub in_dim: usize,
    pub edge_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
}

/// Which rows of a layer to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rows {
    All,
    /// Only node 0; keys still come from every node.
    SelfOnly,
}

impl GatLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        edge_dim: usize,
        out_dim: usize,
        heads: usize,
        cross_dim: Option<usize>,
        group: Group,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(heads > 0 && out_dim % heads == 0, "heads must divide the layer width");
        Self {
            w: store.add_glorot(&format!("{name}.w"), in_dim, out_dim, group, rng),
            wq: store.add_glorot(&format!("{name}.wq"), out_dim, out_dim, group, rng),
            wk: store.add_glorot(&format!("{name}.wk"), out_dim, out_dim, group, rng),
            we: store.add_glorot(&format!("{name}.we"), edge_dim, out_dim, group, rng),
            w_cross: cross_dim.map(|c| store.add_glorot(&format!("{name}.wx"), c, out_dim, group, rng)),
            in_dim,
            edge_dim,
            out_dim,
            heads,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.out_dim / self.heads
    }

    /// `h`: `n × in_dim` node matrix, `edges`: `n·n × edge_dim` row-major
    /// edge features, `mask`: `n·n` adjacency. `cross` is `(M, H')` with `M`
    /// having one row per computed output row. Attention matrices are pushed
    /// onto `attn` when given.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        h: Var,
        edges: &[f64],
        mask: &Arc<Vec<bool>>,
        rows: Rows,
        cross: Option<(Var, Var)>,
        mut attn: Option<&mut Vec<Var>>,
    ) -> Var {
        let n = t.shape(h).0;
        assert_eq!(edges.len(), n * n * self.edge_dim);
        let nq = match rows {
            Rows::All => n,
            Rows::SelfOnly => 1,
        };
        let dk = self.head_dim();
        let w = t.param(store, self.w);
        let z = t.matmul(h, w);
        let wq = t.param(store, self.wq);
        let wk = t.param(store, self.wk);
        let we = t.param(store, self.we);
        let zq = if nq == n { z } else { t.row(z, 0) };
        let q = t.matmul(zq, wq);
        let k = t.matmul(z, wk);
        let e = t.input(nq * n, self.edge_dim, edges[..nq * n * self.edge_dim].to_vec());
        let ke = t.matmul(e, we);
        let qmask = if nq == n { Arc::clone(mask) } else { Arc::new(mask[..n].to_vec()) };
        let scale = 1.0 / (dk as f64).sqrt();

        let mut outs = Vec::with_capacity(self.heads);
        for hd in 0..self.heads {
            let qh = t.slice_cols(q, hd * dk, dk);
            let kh = t.slice_cols(k, hd * dk, dk);
            let node_scores = t.matmul_bt(qh, kh);
            let keh = t.slice_cols(ke, hd * dk, dk);
            let qrep = t.repeat_rows(qh, n);
            let prod = t.mul(qrep, keh);
            let es = t.row_sum(prod);
            let edge_scores = t.reshape(es, nq, n);
            let s = t.add(node_scores, edge_scores);
            let s = t.scale(s, scale);
            let a = t.masked_softmax(s, Arc::clone(&qmask));
            if let Some(list) = attn.as_deref_mut() {
                list.push(a);
            }
            let zh = t.slice_cols(z, hd * dk, dk);
            outs.push(t.matmul(a, zh));
        }
        let mut out = if outs.len() == 1 { outs[0] } else { t.concat_cols(&outs) };
        if let (Some(wx), Some((m, hs))) = (self.w_cross, cross) {
            let wx = t.param(store, wx);
            let agg = t.matmul(m, hs);
            let msg = t.matmul(agg, wx);
            out = t.add(out, msg);
        }
        t.relu(out)
    }
}

/// Gated recurrent unit with `h' = (1 − z) ⊙ h + z ⊙ h̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    /// Input weights for `[z | r | h̃]`.
    pub wx: ParamId,
    /// Recurrent weights for `[z | r]`.
    pub wh: ParamId,
    /// Recurrent weights for the candidate.
    pub uh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, group: Group, rng: &mut impl Rng) -> Self {
        Self {
            wx: store.add_glorot(&format!("{name}.wx"), input, 3 * hidden, group, rng),
            wh: store.add_glorot(&format!("{name}.wh"), hidden, 2 * hidden, group, rng),
            uh: store.add_glorot(&format!("{name}.uh"), hidden, hidden, group, rng),
            b: store.add_zeros(&format!("{name}.b"), 1, 3 * hidden, group),
            input,
            hidden,
        }
    }

    pub fn forward(&self, t: &mut Tape, store: &ParamStore, x: Var, h: Var) -> Var {
        let hd = self.hidden;
        let wx = t.param(store, self.wx);
        let wh = t.param(store, self.wh);
        let uh = t.param(store, self.uh);
        let b = t.param(store, self.b);
        let gx = t.affine(x, wx, b);
        let gh = t.matmul(h, wh);
        let zx = t.slice_cols(gx, 0, hd);
        let rx = t.slice_cols(gx, hd, hd);
        let cx = t.slice_cols(gx, 2 * hd, hd);
        let zh = t.slice_cols(gh, 0, hd);
        let rh = t.slice_cols(gh, hd, hd);
        let zp = t.add(zx, zh);
        let z = t.sigmoid(zp);
        let rp = t.add(rx, rh);
        let r = t.sigmoid(rp);
        let rh_state = t.mul(r, h);
        let cu = t.matmul(rh_state, uh);
        let cp = t.add(cx, cu);
        let cand = t.tanh(cp);
        let delta = t.sub(cand, h);
        let step = t.mul(z, delta);
        t.add(h, step)
    }
}
