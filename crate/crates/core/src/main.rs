use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::{error, info};

use uavfed_core::config::FeatureMode;
use uavfed_core::experiment::{
    self, load_agents, oracle_check, quant_bench, run_seeds, run_with_agents, save_checkpoints, write_outputs,
    PolicyKind, RunOptions,
};
use uavfed_core::{Result, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Train,
    Eval,
    OracleCheck,
    QuantBench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Features {
    Gat,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    Learned,
    Random,
    Greedy,
}

/// Multi-UAV edge computing simulator with federated multi-agent learning.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// TOML config; keys it omits take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile used when no config file is given.
    #[arg(long, default_value = "desk")]
    profile: String,
    #[arg(long, value_enum, default_value = "train")]
    mode: Mode,
    /// Single seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seeds, run in parallel.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    quant: Option<Switch>,
    #[arg(long, value_enum)]
    fl: Option<Switch>,
    #[arg(long, value_enum)]
    reputation: Option<Switch>,
    #[arg(long, value_enum)]
    features: Option<Features>,
    #[arg(long, value_enum, default_value = "learned")]
    policy: Policy,
    #[arg(long)]
    episodes: Option<usize>,
    /// Episode length, s.
    #[arg(long)]
    episode_len: Option<f64>,
    /// Directory of trained checkpoints for `--mode eval`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Snapshot count for `--mode oracle-check`.
    #[arg(long, default_value_t = 200)]
    snapshots: usize,
    /// Keep per-task rows in tasks.csv.
    #[arg(long)]
    record_tasks: bool,
}

fn set<T: PartialEq + std::fmt::Debug>(slot: &mut T, value: Option<T>, flag: &str) {
    if let Some(v) = value {
        if *slot != v {
            info!("--{flag} overrides {:?} with {:?}", slot, v);
        }
        *slot = v;
    }
}

fn effective_config(cli: &Cli) -> Result<SimConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            info!("config file {}", p.display());
            SimConfig::load(p)?
        }
        None => {
            info!("profile {}", cli.profile);
            SimConfig::profile(&cli.profile)?
        }
    };
    set(&mut cfg.sim.seed, cli.seed, "seed");
    set(&mut cfg.sim.episodes, cli.episodes, "episodes");
    set(&mut cfg.sim.episode_len, cli.episode_len, "episode-len");
    set(&mut cfg.fl.quantize, cli.quant.map(Switch::on), "quant");
    set(&mut cfg.fl.enabled, cli.fl.map(Switch::on), "fl");
    set(&mut cfg.fl.reputation, cli.reputation.map(Switch::on), "reputation");
    let features = cli.features.map(|f| match f {
        Features::Gat => FeatureMode::Gat,
        Features::Mlp => FeatureMode::Mlp,
    });
    set(&mut cfg.network.features, features, "features");
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    info!("config hash {}", cfg.hash());
    let seeds = if cli.seeds.is_empty() { vec![cfg.sim.seed] } else { cli.seeds.clone() };
    let policy = match cli.policy {
        Policy::Learned => PolicyKind::Learned,
        Policy::Random => PolicyKind::Random,
        Policy::Greedy => PolicyKind::Greedy,
    };
    match cli.mode {
        Mode::Train | Mode::Eval => {
            let learn = cli.mode == Mode::Train && policy == PolicyKind::Learned;
            let opts = RunOptions {
                policy,
                learn,
                seed: seeds[0],
                record_tasks: cli.record_tasks,
                label: policy.name().to_string(),
            };
            let results = match (&cli.checkpoint, cli.mode, policy) {
                (Some(dir), Mode::Eval, PolicyKind::Learned) => seeds
                    .iter()
                    .map(|&s| {
                        let agents = load_agents(&cfg, dir, s)?;
                        run_with_agents(&cfg, &RunOptions { seed: s, ..opts.clone() }, Some(agents))
                    })
                    .collect::<Result<Vec<_>>>()?,
                _ => {
                    if cli.mode == Mode::Eval && policy == PolicyKind::Learned {
                        log::warn!("evaluating an untrained policy; pass --checkpoint to load one");
                    }
                    run_seeds(&cfg, &opts, &seeds)?
                }
            };
            let mode = if cli.mode == Mode::Train { "train" } else { "eval" };
            write_outputs(&cli.out, &cfg, mode, &results)?;
            if learn {
                for r in &results {
                    save_checkpoints(&cli.out, r)?;
                }
            }
            for r in &results {
                println!(
                    "seed {}: final cost {:.4}, deadline rate {:.3}, violations {}",
                    r.seed,
                    r.tail_mean(experiment::FINAL_WINDOW, |e| e.f_total),
                    r.tail_mean(experiment::FINAL_WINDOW, |e| e.deadline_rate),
                    r.audit.violations()
                );
            }
            println!("outputs in {}", cli.out.display());
        }
        Mode::OracleCheck => {
            let rep = oracle_check(&cfg, cli.snapshots, 4, seeds[0])?;
            println!(
                "oracle-check: {} snapshots, {} paths, worst relative error {:.3e}, path-set mismatches {}, {:.2} s",
                rep.snapshots, rep.paths, rep.worst_rel, rep.set_mismatches, rep.seconds
            );
            if rep.worst_rel > 1e-9 || rep.set_mismatches > 0 {
                return Err(uavfed_core::Error::Config("engine disagrees with the oracle".into()));
            }
        }
        Mode::QuantBench => {
            let rep = quant_bench(&cfg, seeds[0])?;
            println!(
                "quant-bench: {} params, full {} B, quantized {} B, reduction {:.1}% (wire {} B vs {} B)",
                rep.params,
                rep.bytes_full,
                rep.bytes_quantized,
                100.0 * rep.reduction,
                rep.wire_quantized,
                rep.wire_full
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
