//! Minimal reverse-mode learning substrate and the policy network.

pub mod graph;
pub mod layers;
pub mod model;
pub mod params;
pub mod tape;

pub use graph::{attention_weights, transfer_matrix, LayerGraph, LocalGraph};
pub use layers::{GatLayer, Gru, Linear, Mlp, Rows};
pub use model::{Encoder, Forward, Network};
pub use params::{Adam, Grads, Group, ParamId, ParamStore};
pub use tape::{Tape, Var};
