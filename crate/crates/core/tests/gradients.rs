mod common;

use std::f64::consts::{E, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uavfed_core::config::FeatureMode;
use uavfed_core::gradcheck::{check_network, Probe};
use uavfed_core::marl::{tape_gaussian_entropy, tape_gaussian_logprob};
use uavfed_core::nn::{Group, Network, ParamStore, Tape};
use uavfed_core::SimConfig;

fn network(features: FeatureMode, seed: u64) -> Network {
    let mut cfg = SimConfig::default();
    cfg.network.features = features;
    Network::new(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn probe() -> Probe {
    Probe { action: [3.0, -2.0], slot: 1, target: 0.4 }
}

#[test]
fn full_network_matches_central_differences() {
    let net = network(FeatureMode::Gat, 7);
    let g = common::random_graph(11, 3, 6);
    let h = common::random_hidden(11, net.hidden_size());
    let rep = check_network(&net, &g, &h, &probe(), 1000, 1e-4, 3);
    assert_eq!(rep.checked, 1000);
    assert!(rep.passed(1e-4), "worst {:e}: {:?}", rep.worst, rep.failures);
    for group in ["gat", "gru", "shared", "vel", "off", "critic"] {
        assert!(rep.worst_by_group.iter().any(|(n, _)| n == group), "{group} not probed");
    }
}

#[test]
fn small_graph_gat_layers() {
    let net = network(FeatureMode::Gat, 8);
    let g = common::random_graph(21, 2, 4);
    assert_eq!(g.serv.n, 5);
    let h = common::random_hidden(21, net.hidden_size());
    let rep = check_network(&net, &g, &h, &probe(), 200, 1e-4, 4);
    assert!(rep.passed(1e-4), "worst {:e}: {:?}", rep.worst, rep.failures);
}

#[test]
fn feedforward_extractor() {
    let net = network(FeatureMode::Mlp, 9);
    let g = common::random_graph(31, 3, 5);
    let h = common::random_hidden(31, net.hidden_size());
    let rep = check_network(&net, &g, &h, &probe(), 200, 1e-4, 5);
    assert!(rep.passed(1e-4), "worst {:e}: {:?}", rep.worst, rep.failures);
    assert!(rep.worst_by_group.iter().any(|(n, _)| n == "mlp"));
}

#[test]
fn isolated_owner_node() {
    let net = network(FeatureMode::Gat, 10);
    let g = common::random_graph(41, 1, 0);
    let h = vec![0.0; net.hidden_size()];
    let rep = check_network(&net, &g, &h, &probe(), 200, 1e-4, 6);
    assert!(rep.passed(1e-4), "worst {:e}: {:?}", rep.worst, rep.failures);
}

/// Toy actor with `μ = w·x` and a shared log standard deviation `s`. The
/// velocity loss `−A·log π(a) − c·H` has hand-derived partials
/// `∂/∂w = −A Σ (a_i − μ_i) x_i / σ²` and
/// `∂/∂s = −A Σ ((a_i − μ_i)²/σ² − 1) − 2c`.
#[test]
fn toy_actor_gradient_matches_chain_rule() {
    let (w0, s0) = (0.7, -0.3);
    let x = [1.5, -2.0];
    let a = [0.4, -1.1];
    let adv = 1.3;
    let c = 0.01;

    let mut store = ParamStore::new();
    let w = store.add("w", 1, 1, vec![w0], Group::Vel);
    let s = store.add("s", 1, 1, vec![s0], Group::Vel);
    let mut t = Tape::new();
    let wv = t.param(&store, w);
    let sv = t.param(&store, s);
    let xv = t.input(1, 2, x.to_vec());
    let ones = t.input(1, 2, vec![1.0, 1.0]);
    let mu = t.matmul(wv, xv);
    let log_sigma = t.matmul(sv, ones);
    let lp = tape_gaussian_logprob(&mut t, mu, log_sigma, a);
    let ent = tape_gaussian_entropy(&mut t, log_sigma);
    let l1 = t.scale(lp, -adv);
    let l2 = t.scale(ent, -c);
    let loss = t.add(l1, l2);
    let mut grads = store.zero_grads();
    t.backward(loss, 1.0, &mut grads).unwrap();

    let var = (2.0 * s0).exp();
    let mu = [w0 * x[0], w0 * x[1]];
    let dw = -adv * ((a[0] - mu[0]) * x[0] + (a[1] - mu[1]) * x[1]) / var;
    let ds = -adv * ((a[0] - mu[0]).powi(2) / var - 1.0 + (a[1] - mu[1]).powi(2) / var - 1.0) - 2.0 * c;
    assert!((grads.get(w)[0] - dw).abs() <= 1e-6, "{} vs {dw}", grads.get(w)[0]);
    assert!((grads.get(s)[0] - ds).abs() <= 1e-6, "{} vs {ds}", grads.get(s)[0]);

    let lp_closed = (0..2).map(|i| -(a[i] - mu[i]).powi(2) / (2.0 * var) - s0 - 0.5 * (2.0 * PI).ln()).sum::<f64>();
    let h_closed = 2.0 * s0 + (2.0 * PI * E).ln();
    assert!((t.scalar(loss) - (-adv * lp_closed - c * h_closed)).abs() <= 1e-12);
}

