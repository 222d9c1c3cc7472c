use std::fs;
use std::path::Path;

use uavfed_core::experiment::{run, run_seeds, save_checkpoints, write_outputs, PolicyKind, RunOptions};
use uavfed_core::SimConfig;

fn small() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.sim.episodes = 2;
    cfg.sim.episode_len = 40.0;
    cfg
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let cfg = small();
    let opts = RunOptions { record_tasks: true, ..RunOptions::train(5) };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let r = run(&cfg, &opts).unwrap();
        write_outputs(d.path(), &cfg, "train", std::slice::from_ref(&r)).unwrap();
        save_checkpoints(d.path(), &r).unwrap();
    }
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    assert!(a.len() >= 6, "{:?}", a.iter().map(|f| &f.0).collect::<Vec<_>>());
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs");
    }
}

#[test]
fn parallel_seeds_match_sequential_runs() {
    let cfg = small();
    let opts = RunOptions::reference(PolicyKind::Random, 0);
    let par = run_seeds(&cfg, &opts, &[3, 4]).unwrap();
    for r in &par {
        let seq = run(&cfg, &RunOptions { seed: r.seed, ..opts.clone() }).unwrap();
        assert_eq!(seq.episodes, r.episodes);
    }
}

#[test]
fn different_seeds_differ() {
    let cfg = small();
    let a = run(&cfg, &RunOptions::reference(PolicyKind::Random, 1)).unwrap();
    let b = run(&cfg, &RunOptions::reference(PolicyKind::Random, 2)).unwrap();
    assert_ne!(a.episodes, b.episodes);
}

#[test]
fn ledgers_close_every_episode() {
    let mut cfg = small();
    cfg.sim.episodes = 3;
    let r = run(&cfg, &RunOptions::train(9)).unwrap();
    assert!(r.norm.ledger_closure_worst <= 1e-9);
    assert_eq!(r.ledgers.len(), 3 * cfg.sim.num_uavs);
    for row in &r.ledgers {
        let l = &row.ledger;
        let sum = l.e_trajectory + l.e_uplink + l.e_decision + l.e_forward + l.e_process + l.e_return + l.e_downlink;
        assert!((l.e_total - sum).abs() <= 1e-9 * sum.abs(), "{row:?}");
        assert!(l.e_trajectory > 0.0);
    }
    assert_eq!(r.audit.violations(), 0);
}
