//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! hard failure. Runs the full learning protocol, so expect tens of minutes
//! on a single core.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uavfed_core::experiment::{
    oracle_check, quant_bench, run, run_seeds, write_outputs, PolicyKind, RunOptions, RunResult, FINAL_WINDOW,
};
use uavfed_core::fedlearn::{bit_width_schedule, dequantize, quantization_bound, quantize};
use uavfed_core::gradcheck::{check_network, Probe};
use uavfed_core::metrics::{mean, pooled_costs, std_dev, EpisodeMetrics, NormalizationAudit};
use uavfed_core::nn::{Group, Network};
use uavfed_core::SimConfig;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(PartialEq)]
enum Verdict {
    Pass,
    Fail,
    Flag,
}

struct Report {
    lines: Vec<(usize, &'static str, Verdict, String)>,
}

impl Report {
    fn record(&mut self, n: usize, name: &'static str, verdict: Verdict, detail: String) {
        let tag = match verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Flag => "FLAG",
        };
        println!("criterion {n:>2} [{tag}] {name}: {detail}");
        self.lines.push((n, name, verdict, detail));
    }

    fn check(&mut self, n: usize, name: &'static str, ok: bool, detail: String) {
        self.record(n, name, if ok { Verdict::Pass } else { Verdict::Fail }, detail);
    }
}

fn tail(eps: &[EpisodeMetrics], xs: &[f64]) -> f64 {
    debug_assert_eq!(eps.len(), xs.len());
    mean(&xs[xs.len().saturating_sub(FINAL_WINDOW)..])
}

fn tail_by(eps: &[EpisodeMetrics], f: impl Fn(&EpisodeMetrics) -> f64) -> f64 {
    let xs: Vec<f64> = eps.iter().map(f).collect();
    tail(eps, &xs)
}

fn oracle(rep: &mut Report) {
    let cfg = SimConfig::default();
    match oracle_check(&cfg, 200, 4, 17) {
        Ok(o) => rep.check(
            1,
            "oracle equivalence",
            o.snapshots >= 100 && o.worst_rel <= 1e-9 && o.set_mismatches == 0 && o.seconds < 60.0,
            format!(
                "{} snapshots, {} paths, worst relative error {:.2e}, path-set mismatches {}, {:.1} s",
                o.snapshots, o.paths, o.worst_rel, o.set_mismatches, o.seconds
            ),
        ),
        Err(e) => rep.check(1, "oracle equivalence", false, format!("error: {e}")),
    }
}

fn gradients(rep: &mut Report) {
    let start = Instant::now();
    let cfg = SimConfig::default();
    let net = Network::new(&cfg, &mut ChaCha8Rng::seed_from_u64(101));
    let g = common::random_graph(202, cfg.sim.num_uavs, 8);
    let h = common::random_hidden(202, net.hidden_size());
    let probe = Probe { action: [3.0, -2.0], slot: 1, target: 0.4 };
    let r = check_network(&net, &g, &h, &probe, 1000, 1e-4, 303);
    let secs = start.elapsed().as_secs_f64();
    let groups: Vec<String> = r.worst_by_group.iter().map(|(n, w)| format!("{n} {w:.1e}")).collect();
    rep.check(
        2,
        "gradient fidelity",
        r.checked == 1000 && r.passed(1e-4) && secs < 120.0,
        format!("{} coordinates, worst {:.2e} ({}), {:.1} s", r.checked, r.worst, groups.join(", "), secs),
    );
}

fn ledger(rep: &mut Report) {
    let mut cfg = SimConfig::default();
    cfg.sim.episodes = 10;
    match run(&cfg, &RunOptions::train(23)) {
        Ok(r) => {
            let episodes: std::collections::BTreeSet<usize> = r.ledgers.iter().map(|l| l.episode).collect();
            let worst = r.ledgers.iter().map(|l| l.ledger.closure_error()).fold(0.0, f64::max);
            rep.check(
                3,
                "energy ledger closure",
                episodes.len() == 10 && r.ledgers.len() == 10 * cfg.sim.num_uavs && worst <= 1e-9,
                format!("{} episodes, {} ledgers, worst relative gap {:.2e}", episodes.len(), r.ledgers.len(), worst),
            );
        }
        Err(e) => rep.check(3, "energy ledger closure", false, format!("error: {e}")),
    }
}

fn communication(rep: &mut Report) {
    let mut details = Vec::new();
    let mut ok = true;
    for features in [true, false] {
        let start = Instant::now();
        let mut cfg = SimConfig::default();
        cfg.fl.aggregate_features = features;
        match quant_bench(&cfg, 31) {
            Ok(q) => {
                let secs = start.elapsed().as_secs_f64();
                ok &= cfg.fl.b_min == 4 && cfg.fl.b_max == 16;
                ok &= (0.40..=0.70).contains(&q.reduction) && secs < 10.0 && q.worst_bound_ratio <= 1.0;
                details.push(format!(
                    "{}: {} params, {} B vs {} B, reduction {:.1}%, {:.1} s",
                    if features { "all groups" } else { "heads only" },
                    q.params,
                    q.bytes_quantized,
                    q.bytes_full,
                    100.0 * q.reduction,
                    secs
                ));
            }
            Err(e) => {
                ok = false;
                details.push(format!("error: {e}"));
            }
        }
    }
    rep.check(4, "communication reduction", ok, details.join("; "));
}

fn quant_bound(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let (mut total, mut within, mut worst) = (0usize, 0usize, 0.0f64);
    for _ in 0..100 {
        let n = 10_000;
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let params: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        let grads: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bits = bit_width_schedule(&grads, 4, 16);
        let blob = quantize(Group::Critic, &params, &bits).expect("finite values");
        let back = dequantize(&blob);
        for i in 0..n {
            let bound = quantization_bound(&blob, i);
            let err = (params[i] - back[i]).abs();
            total += 1;
            if err <= bound {
                within += 1;
            }
            worst = worst.max(err / bound);
        }
    }
    rep.check(
        7,
        "quantization bound",
        total == 1_000_000 && within == total,
        format!("{within}/{total} within bound, worst error/bound {worst:.6}"),
    );
}

fn determinism(rep: &mut Report) {
    let mut ok = true;
    let mut details = Vec::new();
    for features in [true, false] {
        let mut cfg = SimConfig::default();
        cfg.sim.episodes = 3;
        cfg.fl.aggregate_features = features;
        let opts = RunOptions { record_tasks: true, ..RunOptions::train(61) };
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let r = run(&cfg, &opts).expect("run");
            write_outputs(d.path(), &cfg, "train", std::slice::from_ref(&r)).expect("write");
        }
        let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        let mut same = 0;
        for n in &names {
            let a = std::fs::read(dirs[0].path().join(n)).unwrap();
            let b = std::fs::read(dirs[1].path().join(n)).unwrap_or_default();
            if a == b {
                same += 1;
            }
        }
        ok &= same == names.len() && names.len() >= 5;
        details.push(format!("{same}/{} files identical", names.len()));
    }
    rep.check(9, "determinism", ok, details.join("; "));
}

fn protocol(rep: &mut Report) {
    let start = Instant::now();
    let cfg = SimConfig::default();
    let mut no_fed = cfg.clone();
    no_fed.fl.enabled = false;
    let runs = (|| -> uavfed_core::Result<(Vec<RunResult>, Vec<RunResult>, Vec<RunResult>)> {
        let full = run_seeds(&cfg, &RunOptions::train(0), &SEEDS)?;
        let ablation = run_seeds(&no_fed, &RunOptions { label: "no_fed".into(), ..RunOptions::train(0) }, &SEEDS)?;
        let random = run_seeds(&cfg, &RunOptions::reference(PolicyKind::Random, 0), &SEEDS)?;
        Ok((full, ablation, random))
    })();
    let secs = start.elapsed().as_secs_f64();
    let (full, ablation, random) = match runs {
        Ok(r) => r,
        Err(e) => {
            for (n, name) in [(5, "learning signal"), (6, "ablation ordering"), (8, "normalization"), (10, "constraints")] {
                rep.check(n, name, false, format!("error: {e}"));
            }
            return;
        }
    };

    let (a, b) = (cfg.reward.alpha, cfg.reward.beta);
    let mut cost = [Vec::new(), Vec::new(), Vec::new()];
    let mut deadline = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..SEEDS.len() {
        let sets = [&full[i].episodes[..], &ablation[i].episodes[..], &random[i].episodes[..]];
        let pooled = pooled_costs(&sets, a, b);
        for j in 0..3 {
            cost[j].push(tail(sets[j], &pooled[j]));
            deadline[j].push(tail_by(sets[j], |e| e.deadline_rate));
        }
        println!(
            "  seed {}: cost full {:.3} no-fed {:.3} random {:.3}; deadline full {:.3} no-fed {:.3} random {:.3}; energy full {:.0} J random {:.0} J",
            SEEDS[i],
            cost[0][i],
            cost[1][i],
            cost[2][i],
            deadline[0][i],
            deadline[1][i],
            deadline[2][i],
            tail_by(sets[0], |e| e.f_energy),
            tail_by(sets[2], |e| e.f_energy),
        );
    }
    let (c_full, c_abl, c_rand) = (mean(&cost[0]), mean(&cost[1]), mean(&cost[2]));
    let (d_full, d_rand) = (mean(&deadline[0]), mean(&deadline[2]));
    let cost_ok = c_full <= 0.7 * c_rand;
    let deadline_ok = d_full >= d_rand + 0.15;
    rep.check(
        5,
        "learning signal",
        cost_ok && deadline_ok && secs < 1800.0,
        format!(
            "cost {:.3} vs random {:.3} (ratio {:.2}, need <= 0.70: {}); deadline {:.3} vs random {:.3} ({:+.1} pp, need >= +15: {}); {:.0} s",
            c_full,
            c_rand,
            c_full / c_rand,
            if cost_ok { "met" } else { "missed" },
            d_full,
            d_rand,
            100.0 * (d_full - d_rand),
            if deadline_ok { "met" } else { "missed" },
            secs
        ),
    );

    let (s_full, s_abl) = (std_dev(&cost[0]), std_dev(&cost[1]));
    let detail = format!("full {c_full:.3} ± {s_full:.3} vs no-fed {c_abl:.3} ± {s_abl:.3}");
    if c_full <= c_abl {
        rep.record(6, "ablation ordering", Verdict::Pass, detail);
    } else if c_full - c_abl <= s_full.max(s_abl) {
        rep.record(6, "ablation ordering", Verdict::Flag, format!("{detail} (reversed, within one std)"));
    } else {
        rep.record(6, "ablation ordering", Verdict::Fail, format!("{detail} (reversed beyond one std)"));
    }

    let mut norm = NormalizationAudit::default();
    full.iter().chain(&ablation).for_each(|r| norm.merge(&r.norm));
    rep.check(
        8,
        "normalization",
        norm.ok() && norm.transfer_rows > 0 && norm.aggregation_rounds > 0,
        format!(
            "attention {:.1e}, transfer {:.1e} over {} rows, aggregation {:.1e} over {} rounds",
            norm.attention_worst, norm.transfer_worst, norm.transfer_rows, norm.aggregation_worst, norm.aggregation_rounds
        ),
    );

    let violations: u64 = full.iter().chain(&ablation).chain(&random).map(|r| r.audit.violations()).sum();
    let rejected: u64 = full.iter().map(|r| r.audit.rejected).sum();
    rep.check(
        10,
        "constraint enforcement",
        violations == 0,
        format!("{violations} violations over {} default-profile runs ({rejected} admissions refused)", 3 * SEEDS.len()),
    );
}

fn main() -> ExitCode {
    let mut rep = Report { lines: Vec::new() };
    oracle(&mut rep);
    gradients(&mut rep);
    ledger(&mut rep);
    communication(&mut rep);
    quant_bound(&mut rep);
    determinism(&mut rep);
    protocol(&mut rep);

    rep.lines.sort_by_key(|l| l.0);
    println!("\nsummary");
    for (n, name, v, _) in &rep.lines {
        let tag = match v {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Flag => "FLAG",
        };
        println!("  {n:>2} {tag} {name}");
    }
    let failed = rep.lines.iter().filter(|l| l.2 == Verdict::Fail).count();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
