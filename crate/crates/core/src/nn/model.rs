//! Per-UAV policy network: graph encoder, GRU, shared trunk, velocity and
//! offloading actors and the critic.

use rand::Rng;

use super::graph::{LocalGraph, COOP_EDGE_FEATURES, COOP_FEATURES, SERV_EDGE_FEATURES, SERV_FEATURES};
use super::layers::{GatLayer, Gru, Linear, Mlp, Rows};
use super::params::{Group, ParamStore};
use super::tape::{Tape, Var};
use crate::config::{FeatureMode, SimConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Gat {
        coop: Vec<GatLayer>,
        serv: Vec<GatLayer>,
        fuse: Linear,
    },
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub gru: Gru,
    pub shared: Linear,
    pub vel: Mlp,
    pub off: Mlp,
    pub critic: Mlp,
    /// Offloading slots: local plus every other UAV.
    pub slots: usize,
    pub log_sigma_min: f64,
    pub log_sigma_max: f64,
}

/// Everything one forward pass produces, still attached to its tape.
#[derive(Debug, Clone)]
pub struct Forward {
    pub tape: Tape,
    pub h_final: Var,
    pub shared: Var,
    /// `1 × 2` mean velocity, m/s.
    pub mu: Var,
    /// `1 × 2` clamped log standard deviation.
    pub log_sigma: Var,
    /// `1 × slots`.
    pub logits: Var,
    pub value: Var,
    pub attention: Vec<Var>,
}

impl Forward {
    pub fn h_final_values(&self) -> Vec<f64> {
        self.tape.value(self.h_final).to_vec()
    }

    pub fn value_scalar(&self) -> f64 {
        self.tape.scalar(self.value)
    }
}

impl Network {
    pub fn new(cfg: &SimConfig, rng: &mut impl Rng) -> Self {
        let n = &cfg.network;
        let mut store = ParamStore::new();
        let spatial = n.gru_hidden;
        let encoder = match n.features {
            FeatureMode::Gat => {
                let mut coop = Vec::new();
                let mut serv = Vec::new();
                let mut cin = COOP_FEATURES;
                let mut sin = SERV_FEATURES;
                for (l, &width) in n.gat_hidden.iter().enumerate() {
                    serv.push(GatLayer::new(
                        &mut store,
                        &format!("gat.serv{l}"),
                        sin,
                        SERV_EDGE_FEATURES,
                        width,
                        n.heads,
                        None,
                        Group::Gat,
                        rng,
                    ));
                    coop.push(GatLayer::new(
                        &mut store,
                        &format!("gat.coop{l}"),
                        cin,
                        COOP_EDGE_FEATURES,
                        width,
                        n.heads,
                        Some(sin),
                        Group::Gat,
                        rng,
                    ));
                    cin = width;
                    sin = width;
                }
                let last = *n.gat_hidden.last().unwrap();
                let fuse = Linear::new(&mut store, "gat.fuse", 2 * last, spatial, Group::Gat, rng);
                Encoder::Gat { coop, serv, fuse }
            }
            FeatureMode::Mlp => Encoder::Mlp(Mlp::new(
                &mut store,
                "mlp",
                COOP_FEATURES + SERV_FEATURES,
                &[n.gat_hidden[0]],
                spatial,
                Group::Mlp,
                rng,
            )),
        };
        let gru = Gru::new(&mut store, "gru", spatial, n.gru_hidden, Group::Gru, rng);
        let shared = Linear::new(&mut store, "shared", n.gru_hidden, n.shared, Group::Shared, rng);
        let vel = Mlp::new(&mut store, "vel", n.shared, &n.vel_hidden, 4, Group::Vel, rng);
        let slots = cfg.sim.num_uavs;
        let off = Mlp::new(&mut store, "off", n.shared, &n.off_hidden, slots, Group::Off, rng);
        let critic = Mlp::new(&mut store, "critic", n.shared, &n.critic_hidden, 1, Group::Critic, rng);
        Self {
            store,
            encoder,
            gru,
            shared,
            vel,
            off,
            critic,
            slots,
            log_sigma_min: cfg.training.sigma_min.ln(),
            log_sigma_max: cfg.sim.v_max.ln(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.gru.hidden
    }

    /// Spatial embedding (`1 × gru_hidden`) of a local graph.
    pub fn encode(&self, t: &mut Tape, g: &LocalGraph, attn: Option<&mut Vec<Var>>) -> Var {
        let store = &self.store;
        match &self.encoder {
            Encoder::Gat { coop, serv, fuse } => {
                let mut attn = attn;
                let mut hc = t.input(g.coop.n, g.coop.node_dim, g.coop.x.clone());
                let mut hs = t.input(g.serv.n, g.serv.node_dim, g.serv.x.clone());
                let m_row = t.input(1, g.serv.n, g.transfer.clone());
                let depth = coop.len();
                for l in 0..depth {
                    let rows = if l + 1 == depth { Rows::SelfOnly } else { Rows::All };
                    let nq = if rows == Rows::All { g.coop.n } else { 1 };
                    // Only the owner's cooperation node receives the message.
                    let m = if nq == 1 {
                        m_row
                    } else {
                        let mut full = vec![0.0; nq * g.serv.n];
                        full[..g.serv.n].copy_from_slice(&g.transfer);
                        t.input(nq, g.serv.n, full)
                    };
                    let next_c = coop[l].forward(
                        t,
                        store,
                        hc,
                        &g.coop.e,
                        &g.coop.mask,
                        rows,
                        Some((m, hs)),
                        attn.as_deref_mut(),
                    );
                    let next_s =
                        serv[l].forward(t, store, hs, &g.serv.e, &g.serv.mask, rows, None, attn.as_deref_mut());
                    hc = next_c;
                    hs = next_s;
                }
                let both = t.concat_cols(&[hc, hs]);
                fuse.forward(t, store, both)
            }
            Encoder::Mlp(mlp) => {
                let own = &g.coop.x[..g.coop.node_dim];
                let mut dev = vec![0.0; SERV_FEATURES];
                let nd = g.serv.n - 1;
                for i in 1..g.serv.n {
                    for (d, x) in dev.iter_mut().zip(&g.serv.x[i * SERV_FEATURES..(i + 1) * SERV_FEATURES]) {
                        *d += x / nd as f64;
                    }
                }
                let mut input = own.to_vec();
                input.extend_from_slice(&dev);
                let x = t.input(1, input.len(), input);
                mlp.forward(t, store, x)
            }
        }
    }

    /// Policy and value heads on top of a recurrent state.
    pub fn heads(&self, t: &mut Tape, h_final: Var) -> (Var, Var, Var, Var, Var) {
        let s = self.shared.forward(t, &self.store, h_final);
        let s = t.relu(s);
        let v = self.vel.forward(t, &self.store, s);
        let mu = t.slice_cols(v, 0, 2);
        let ls = t.slice_cols(v, 2, 2);
        let log_sigma = t.clamp(ls, self.log_sigma_min, self.log_sigma_max);
        let logits = self.off.forward(t, &self.store, s);
        let value = self.critic.forward(t, &self.store, s);
        (s, mu, log_sigma, logits, value)
    }

    /// Full forward pass; `h_prev` enters as a constant.
    pub fn forward(&self, g: &LocalGraph, h_prev: &[f64]) -> Forward {
        let mut t = Tape::new();
        let mut attention = Vec::new();
        let x = self.encode(&mut t, g, Some(&mut attention));
        let h = t.input(1, h_prev.len(), h_prev.to_vec());
        let h_final = self.gru.forward(&mut t, &self.store, x, h);
        let (shared, mu, log_sigma, logits, value) = self.heads(&mut t, h_final);
        Forward { tape: t, h_final, shared, mu, log_sigma, logits, value, attention }
    }

    /// Largest deviation of any attention row sum from 1 in a pass.
    pub fn attention_row_deviation(f: &Forward) -> f64 {
        let mut worst: f64 = 0.0;
        for &a in &f.attention {
            let (_, c) = f.tape.shape(a);
            for row in f.tape.value(a).chunks(c) {
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
        worst
    }
}
