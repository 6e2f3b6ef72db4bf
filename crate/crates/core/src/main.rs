//! Command-line entry point: train one agent (or all of them, paired) under
//! a config profile and write per-episode metric CSVs.

use clap::{Parser, ValueEnum};
use d3pg::agents::AgentKind;
use d3pg::harness::{run_experiment, ExperimentConfig, HarnessError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AgentArg {
    D3pg,
    Ddpg,
    #[value(name = "ddpg_softmax")]
    DdpgSoftmax,
    Td3,
    Greedy,
    All,
}

impl AgentArg {
    fn kinds(self) -> Vec<AgentKind> {
        match self {
            AgentArg::D3pg => vec![AgentKind::D3pg],
            AgentArg::Ddpg => vec![AgentKind::Ddpg],
            AgentArg::DdpgSoftmax => vec![AgentKind::DdpgSoftmax],
            AgentArg::Td3 => vec![AgentKind::Td3],
            AgentArg::Greedy => vec![AgentKind::Greedy],
            AgentArg::All => AgentKind::ALL.to_vec(),
        }
    }
}

/// Edge-offloading simulator with D3PG and baseline agents.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// Config file (TOML or JSON); overrides the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Which agent(s) to train. `all` runs every agent under the same seeds
    /// for a paired comparison.
    #[arg(long, value_enum, default_value_t = AgentArg::D3pg)]
    agent: AgentArg,
    /// Override the number of training episodes per run.
    #[arg(long)]
    episodes: Option<usize>,
    /// Override the base seed (run k uses seed + k).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSVs and metadata.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Built-in config profile used when --config is absent.
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let text = match cli.profile {
                Profile::Desk => include_str!("../../../configs/desk.toml"),
                Profile::Paper => include_str!("../../../configs/paper.toml"),
            };
            let cfg: ExperimentConfig =
                toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
            cfg
        }
    };
    if let Some(episodes) = cli.episodes {
        cfg.experiment.episodes = episodes;
    }
    if let Some(seed) = cli.seed {
        cfg.experiment.base_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = load_config(cli)?;
    let kinds = cli.agent.kinds();
    let results = run_experiment(&cfg, &kinds, &cli.out)?;
    for result in &results {
        let window = result.mean.len().min(50);
        let tail = &result.mean[result.mean.len() - window..];
        let mean_reward: f64 =
            tail.iter().map(|m| m.total_reward).sum::<f64>() / window as f64;
        let mean_steps: f64 =
            tail.iter().map(|m| m.steps_survived).sum::<f64>() / window as f64;
        println!(
            "{}: {} runs x {} episodes; final-{window} mean reward {mean_reward:.3}, mean steps {mean_steps:.1}",
            result.kind,
            result.runs.len(),
            result.mean.len(),
        );
    }
    println!("wrote CSVs to {}", cli.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
