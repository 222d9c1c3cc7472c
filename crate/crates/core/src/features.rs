//! Standardized local-graph features built from the world.

use crate::nn::graph::{
    transfer_matrix, LayerGraph, LocalGraph, COOP_EDGE_FEATURES, COOP_FEATURES, SERV_EDGE_FEATURES, SERV_FEATURES,
};
use crate::radio::{self, watts_to_dbm};
use crate::sim::World;

/// Maps an RSSI in dBm onto roughly `[0, 1]` above the coverage threshold.
fn rssi_feature(watts: f64) -> f64 {
    (watts_to_dbm(watts) + 90.0) / 50.0
}

fn safe_dist(d: f64) -> f64 {
    d.max(1.0)
}

/// `[x, y, h, vx, vy, energy, load, f, 0, 1]`, each scaled to order one.
pub fn uav_features(w: &World, k: usize) -> [f64; COOP_FEATURES] {
    let u = &w.uavs[k];
    let s = &w.cfg.sim;
    [
        u.pos[0] / s.area,
        u.pos[1] / s.area,
        u.pos[2] / s.altitude[1].max(1.0),
        u.vel[0] / s.v_max,
        u.vel[1] / s.v_max,
        u.energy_remaining / s.battery,
        u.queue.load() / s.load_max,
        u.cpu_freq / s.cpu_freq[1],
        0.0,
        1.0,
    ]
}

/// `[x, y, |Q|, λ, urgency, 0, 0, 0, 0, 1]`; urgency is the clipped
/// most-urgent remaining deadline over the maximum deadline.
pub fn device_features(w: &World, m: usize) -> [f64; SERV_FEATURES] {
    let d = &w.devices[m];
    let s = &w.cfg.sim;
    let c_max = w.cfg.tasks.deadline[1];
    let urg = d.most_urgent_deadline(w.clock).min(c_max) / c_max;
    [
        d.loc[0] / s.area,
        d.loc[1] / s.area,
        d.queue_len() as f64 / 10.0,
        d.rate / w.cfg.tasks.rate[1].max(1e-12),
        urg,
        0.0,
        0.0,
        0.0,
        0.0,
        1.0,
    ]
}

/// Dual-layer graph seen by UAV `k`. `transmitting` is the current uplink set
/// used for the rate feature.
pub fn build_local_graph(w: &World, k: usize, transmitting: &[usize]) -> LocalGraph {
    let r = &w.radio;
    let mut coop_ids = vec![k];
    for j in 0..w.num_uavs() {
        if j != k && w.uavs[j].active && r.connected(radio::distance(w.uavs[k].pos, w.uavs[j].pos)) {
            coop_ids.push(j);
        }
    }
    let mut coop = LayerGraph::new(coop_ids.len(), COOP_FEATURES, COOP_EDGE_FEATURES);
    for (i, &j) in coop_ids.iter().enumerate() {
        coop.set_node(i, &uav_features(w, j));
    }
    for a in 0..coop_ids.len() {
        for b in a + 1..coop_ids.len() {
            let (ka, kb) = (coop_ids[a], coop_ids[b]);
            let d = radio::distance(w.uavs[ka].pos, w.uavs[kb].pos);
            if !r.connected(d) {
                continue;
            }
            let rssi = r.inter_rssi(safe_dist(d)).unwrap();
            let eta = 0.5 * (w.coop_frequency(ka, kb) + w.coop_frequency(kb, ka));
            coop.set_edge(a, b, &[d / r.r_comm, rssi_feature(rssi), r.bandwidth_inter / 20e6, eta]);
        }
    }

    let serv_ids: Vec<usize> = (0..w.num_devices()).filter(|&m| w.covers(k, m)).collect();
    let mut serv = LayerGraph::new(serv_ids.len() + 1, SERV_FEATURES, SERV_EDGE_FEATURES);
    serv.set_node(0, &uav_features(w, k));
    let pos = w.uavs[k].pos;
    for (i, &m) in serv_ids.iter().enumerate() {
        serv.set_node(i + 1, &device_features(w, m));
        let loc = w.devices[m].loc;
        let dev = [loc[0], loc[1], 0.0];
        let d = safe_dist(radio::distance(pos, dev));
        let rssi = r.downlink_rssi(d).unwrap();
        let interference =
            radio::uplink_interference(r, pos, &w.scenario.device_loc, transmitting, m).unwrap_or(0.0);
        let rate = r.uplink_capacity(d, interference).unwrap_or(0.0);
        serv.set_edge(0, i + 1, &[d / w.cfg.sim.area, rssi_feature(rssi), rate / r.bandwidth / 10.0]);
    }
    let gamma = w.cfg.network.gamma_urg;
    let urgency: Vec<f64> = serv_ids.iter().map(|&m| w.devices[m].most_urgent_deadline(w.clock)).collect();
    let mut transfer = vec![0.0];
    transfer.extend(transfer_matrix(&vec![true; serv_ids.len()], &urgency, gamma));
    LocalGraph { coop, serv, transfer, coop_ids, serv_ids }
}
