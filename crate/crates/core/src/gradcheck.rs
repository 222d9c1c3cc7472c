//! Central finite-difference check of the network's analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::marl::{tape_categorical, tape_gaussian_entropy, tape_gaussian_logprob};
use crate::nn::{Group, LocalGraph, Network, ParamId, Tape, Var};

pub const EPS: f64 = 1e-5;
/// Denominator floor of the relative error. Gradients below it are compared
/// absolutely (to `tol · REL_FLOOR`), which stays an order of magnitude above
/// the central-difference round-off `ε_mach·|L|/EPS` for losses of order 10.
pub const REL_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Fixed probe that touches every head: velocity log-density and entropy,
/// offloading log-probability and entropy, and a squared value error.
#[derive(Debug, Clone)]
pub struct Probe {
    pub action: [f64; 2],
    pub slot: usize,
    pub target: f64,
}

impl Probe {
    pub fn loss(&self, net: &Network, g: &LocalGraph, h_prev: &[f64]) -> (Tape, Var) {
        let f = net.forward(g, h_prev);
        let mut t = f.tape;
        let lp = tape_gaussian_logprob(&mut t, f.mu, f.log_sigma, self.action);
        let ent = tape_gaussian_entropy(&mut t, f.log_sigma);
        let (lp_off, ent_off) = tape_categorical(&mut t, f.logits, &vec![true; net.slots]);
        let pick = t.pick(lp_off, self.slot.min(net.slots - 1));
        let v = t.add_scalar(f.value, -self.target);
        let v2 = t.square(v);
        let a = t.scale(lp, 0.7);
        let b = t.scale(ent, 0.1);
        let c = t.scale(ent_off, 0.2);
        let mut total = t.add(a, b);
        total = t.add(total, c);
        total = t.add(total, pick);
        total = t.add(total, v2);
        (t, total)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordResult {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub worst: f64,
    pub worst_by_group: Vec<(String, f64)>,
    pub failures: Vec<CoordResult>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.worst <= tol
    }
}

/// Compares analytic and central-difference gradients at `coords` random
/// coordinates, drawn round-robin over the parameter groups present.
pub fn check_network(net: &Network, g: &LocalGraph, h_prev: &[f64], probe: &Probe, coords: usize, tol: f64, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (tape, loss) = probe.loss(net, g, h_prev);
    let mut grads = net.store.zero_grads();
    tape.backward(loss, 1.0, &mut grads).expect("probe tape is non-empty");

    let groups: Vec<(Group, Vec<ParamId>)> = Group::ALL
        .iter()
        .map(|&gr| (gr, net.store.ids_in(gr)))
        .filter(|(_, ids)| !ids.is_empty())
        .collect();
    let mut work = net.clone();
    let mut report = GradCheckReport::default();
    let mut worst_by_group = vec![0.0f64; groups.len()];
    for c in 0..coords {
        let gi = c % groups.len();
        let ids = &groups[gi].1;
        let sizes: Vec<usize> = ids.iter().map(|id| work.store.get(*id).len()).collect();
        let mut pick = rng.random_range(0..sizes.iter().sum::<usize>());
        let mut which = 0;
        while pick >= sizes[which] {
            pick -= sizes[which];
            which += 1;
        }
        let id = ids[which];
        let orig = work.store.values(id)[pick];
        work.store.values_mut(id)[pick] = orig + EPS;
        let (t, l) = probe.loss(&work, g, h_prev);
        let up = t.scalar(l);
        work.store.values_mut(id)[pick] = orig - EPS;
        let (t, l) = probe.loss(&work, g, h_prev);
        let down = t.scalar(l);
        work.store.values_mut(id)[pick] = orig;
        let numeric = (up - down) / (2.0 * EPS);
        let analytic = grads.get(id)[pick];
        let rel = relative_error(analytic, numeric);
        report.checked += 1;
        report.worst = report.worst.max(rel);
        worst_by_group[gi] = worst_by_group[gi].max(rel);
        if rel > tol {
            report.failures.push(CoordResult {
                param: work.store.get(id).name.clone(),
                index: pick,
                analytic,
                numeric,
                rel_error: rel,
            });
        }
    }
    report.worst_by_group = groups.iter().zip(worst_by_group).map(|((g, _), w)| (g.name().to_string(), w)).collect();
    report
}
