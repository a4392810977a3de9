use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use taskalloc::bench::{emit_curves, planner_compare, run_benchmark, run_benchmark_with, BenchError, Method, ScenarioSpec};
use taskalloc::policy::PolicyParams;
use taskalloc::ppo::{train, TrainConfig, TrainError, TrainOptions};
use taskalloc::world::WorldError;

#[derive(Parser)]
#[command(name = "taskalloc", version, about = "Multi-agent task allocation: training, evaluation and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed (training) or seed base (evaluation).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Episodes per (method, N) cell.
    #[arg(long)]
    episodes: Option<usize>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy from a JSON config.
    Train {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on a scenario spec.
    Eval {
        checkpoint: PathBuf,
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every method of a scenario spec and tabulate the metrics.
    Bench {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare A* and RRT* path lengths on the spec's instances.
    PlannerCompare {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Split a training log into reward and entropy curves.
    Curves {
        log: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_spec(path: &Path, common: &Common) -> Result<ScenarioSpec> {
    let mut spec = ScenarioSpec::from_json(&read(path)?)?;
    if let Some(s) = common.seed {
        spec.seed_base = s;
    }
    if let Some(e) = common.episodes {
        spec.episodes = e;
    }
    Ok(spec)
}

/// Writes `name` under `--out`, or prints it when no directory is given.
fn emit(common: &Common, name: &str, text: &str) -> Result<()> {
    match &common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(name);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_json<T: serde::Serialize>(common: &Common, name: &str, value: &T) -> Result<()> {
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, common } => {
            let cfg = TrainConfig::from_json(&read(&config)?)?;
            let opts = TrainOptions {
                out_dir: Some(common.out.clone().unwrap_or_else(|| PathBuf::from("runs/train"))),
                parallel: common.parallel,
            };
            let result = train(&cfg, common.seed.unwrap_or(cfg.world.seed), &opts)?;
            if let Some(last) = result.metrics.last() {
                eprintln!(
                    "{} updates, {} env steps, final reward {:.3}, entropy {:.3}",
                    result.metrics.len(),
                    last.env_steps,
                    last.mean_episode_reward,
                    last.mean_entropy
                );
            }
        }
        Command::Eval { checkpoint, scenario, common } => {
            let mut spec = load_spec(&scenario, &common)?;
            spec.methods = vec![Method::Magnnet];
            let policy = PolicyParams::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let report = run_benchmark_with(&spec, Some(&policy), common.parallel)?;
            emit(&common, "eval.csv", &report.to_csv())?;
            emit_json(&common, "eval.json", &report)?;
        }
        Command::Bench { spec, common } => {
            let spec = load_spec(&spec, &common)?;
            let report = run_benchmark(&spec, common.parallel)?;
            emit(&common, "bench.csv", &report.to_csv())?;
            emit_json(&common, "bench.json", &report)?;
        }
        Command::PlannerCompare { spec, common } => {
            let spec = load_spec(&spec, &common)?;
            let report = planner_compare(&spec)?;
            emit(&common, "planners.csv", &report.to_csv())?;
            emit_json(&common, "planners.json", &report)?;
        }
        Command::Curves { log, common } => {
            let (reward, entropy) = emit_curves(&read(&log)?).map_err(anyhow::Error::msg)?;
            emit(&common, "reward.csv", &reward)?;
            emit(&common, "entropy.csv", &entropy)?;
        }
    }
    Ok(())
}

fn is_invariant_violation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref::<WorldError>(), Some(WorldError::Invariant(_)))
            || matches!(c.downcast_ref::<BenchError>(), Some(BenchError::World(WorldError::Invariant(_))))
            || matches!(c.downcast_ref::<TrainError>(), Some(TrainError::World(WorldError::Invariant(_))))
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_invariant_violation(&e) {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
