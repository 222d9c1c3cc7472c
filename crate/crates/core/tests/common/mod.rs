#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uavfed_core::nn::graph::{COOP_EDGE_FEATURES, COOP_FEATURES, SERV_EDGE_FEATURES, SERV_FEATURES};
use uavfed_core::nn::{LayerGraph, LocalGraph};

fn layer(rng: &mut ChaCha8Rng, n: usize, node_dim: usize, edge_dim: usize) -> LayerGraph {
    let mut g = LayerGraph::new(n, node_dim, edge_dim);
    for i in 0..n {
        let x: Vec<f64> = (0..node_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        g.set_node(i, &x);
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.random_bool(0.5) {
                let e: Vec<f64> = (0..edge_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                g.set_edge(i, j, &e);
            }
        }
    }
    g
}

/// Random connected two-layer graph with `uavs` cooperation nodes and
/// `devices` service nodes besides the owner.
pub fn random_graph(seed: u64, uavs: usize, devices: usize) -> LocalGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coop = layer(&mut rng, uavs, COOP_FEATURES, COOP_EDGE_FEATURES);
    let serv = layer(&mut rng, devices + 1, SERV_FEATURES, SERV_EDGE_FEATURES);
    let mut transfer: Vec<f64> = (0..=devices).map(|i| if i == 0 { 0.0 } else { rng.random_range(0.1..1.0) }).collect();
    let z: f64 = transfer.iter().sum();
    if z > 0.0 {
        transfer.iter_mut().for_each(|t| *t /= z);
    }
    LocalGraph { coop, serv, transfer, coop_ids: (0..uavs).collect(), serv_ids: (0..devices).collect() }
}

pub fn random_hidden(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
}
