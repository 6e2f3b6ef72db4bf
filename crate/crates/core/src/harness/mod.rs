//! Experiment configuration and seeded multi-run execution.
//!
//! An experiment = one config x one or more agents x `repetitions` runs.
//! Run `k` uses seed `base_seed + k` for environment streams and agent
//! initialization alike, so running several agents under the same config is
//! automatically a paired comparison: they face identical task arrivals and
//! channel realizations in every episode.

mod metrics;

pub use metrics::{
    episode_metrics, mean_series, read_metrics, write_metrics, EpisodeMetrics, CSV_HEADER,
};

use crate::agents::{build_agent, train, AgentConfig, AgentError, AgentKind};
use crate::env::{Env, EnvConfig, EnvError};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad config: {0}")]
    Config(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// `[experiment]` section of a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Training episodes per run.
    pub episodes: usize,
    /// Independent repetitions averaged in the `*_mean.csv` output.
    pub repetitions: usize,
    /// Seed of run 0; run k uses `base_seed + k`.
    pub base_seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            episodes: 300,
            repetitions: 5,
            base_seed: 1,
        }
    }
}

/// Full experiment description, loadable from TOML or JSON.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let cfg: ExperimentConfig = match ext {
            "json" => serde_json::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.validate()?;
        self.agent.validate().map_err(HarnessError::Config)?;
        if self.experiment.episodes == 0 || self.experiment.repetitions == 0 {
            return Err(HarnessError::Config(
                "episodes and repetitions must be nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Everything produced for one agent kind.
#[derive(Debug)]
pub struct AgentResult {
    pub kind: AgentKind,
    /// `runs[k][episode]`
    pub runs: Vec<Vec<EpisodeMetrics>>,
    pub mean: Vec<EpisodeMetrics>,
}

/// Train each requested agent `repetitions` times and write, per agent,
/// `<out>/<agent>_run<k>.csv` and `<out>/<agent>_mean.csv`, plus a
/// `metadata.json` echoing the resolved config.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    kinds: &[AgentKind],
    out_dir: &Path,
) -> Result<Vec<AgentResult>, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;

    let mut results = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut runs = Vec::with_capacity(cfg.experiment.repetitions);
        for rep in 0..cfg.experiment.repetitions {
            let run_seed = cfg.experiment.base_seed + rep as u64;
            let mut env_cfg = cfg.env.clone();
            env_cfg.seed = run_seed;
            let mut env = Env::new(env_cfg)?;
            let mut agent = build_agent(kind, &env, &cfg.agent, run_seed);
            let stats = train(&mut env, &mut agent, cfg.experiment.episodes, run_seed)?;
            let rows: Vec<EpisodeMetrics> = stats.iter().map(episode_metrics).collect();
            let file = fs::File::create(out_dir.join(format!("{kind}_run{rep}.csv")))?;
            write_metrics(&mut BufWriter::new(file), &rows)?;
            runs.push(rows);
        }
        let mean = mean_series(&runs);
        let file = fs::File::create(out_dir.join(format!("{kind}_mean.csv")))?;
        write_metrics(&mut BufWriter::new(file), &mean)?;
        results.push(AgentResult { kind, runs, mean });
    }

    let metadata = serde_json::json!({
        "config": cfg,
        "agents": kinds.iter().map(|k| k.name()).collect::<Vec<_>>(),
    });
    fs::write(
        out_dir.join("metadata.json"),
        serde_json::to_string_pretty(&metadata).expect("serializable metadata"),
    )?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufReader;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            env: EnvConfig {
                n_servers: 3,
                n_users: 4,
                max_steps: 8,
                ..EnvConfig::default()
            },
            agent: AgentConfig {
                batch_size: 8,
                warmup_steps: 8,
                hidden: vec![8, 8],
                greedy_candidates: 6,
                ..AgentConfig::default()
            },
            experiment: ExperimentSection {
                episodes: 2,
                repetitions: 2,
                base_seed: 5,
            },
        }
    }

    #[test]
    fn toml_and_json_round_trip() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();

        let toml_path = dir.path().join("cfg.toml");
        fs::write(&toml_path, toml::to_string(&cfg).unwrap()).unwrap();
        let from_toml = ExperimentConfig::load(&toml_path).unwrap();
        assert_eq!(from_toml.env.n_servers, 3);
        assert_eq!(from_toml.experiment.base_seed, 5);

        let json_path = dir.path().join("cfg.json");
        fs::write(&json_path, serde_json::to_string(&cfg).unwrap()).unwrap();
        let from_json = ExperimentConfig::load(&json_path).unwrap();
        assert_eq!(from_json.agent.batch_size, 8);
    }

    #[test]
    fn load_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, "[env]\nn_serverz = 3\n").unwrap();
        assert!(matches!(
            ExperimentConfig::load(&path),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn partial_config_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.toml");
        fs::write(&path, "[env]\nn_servers = 2\n\n[experiment]\nepisodes = 7\n").unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.env.n_servers, 2);
        assert_eq!(cfg.env.n_users, 50);
        assert_eq!(cfg.experiment.episodes, 7);
        assert_eq!(cfg.agent.gamma, 0.9);
    }

    #[test]
    fn experiment_writes_expected_files() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let results =
            run_experiment(&cfg, &[AgentKind::Greedy, AgentKind::D3pg], dir.path()).unwrap();
        assert_eq!(results.len(), 2);
        for kind in ["greedy", "d3pg"] {
            for rep in 0..2 {
                let path = dir.path().join(format!("{kind}_run{rep}.csv"));
                let rows =
                    read_metrics(BufReader::new(fs::File::open(&path).unwrap())).unwrap();
                assert_eq!(rows.len(), 2);
            }
            let mean_path = dir.path().join(format!("{kind}_mean.csv"));
            let mean = read_metrics(BufReader::new(fs::File::open(mean_path).unwrap())).unwrap();
            assert_eq!(mean.len(), 2);
        }
        assert!(dir.path().join("metadata.json").exists());
    }

    #[test]
    fn experiment_is_reproducible() {
        let cfg = tiny_config();
        let da = tempfile::tempdir().unwrap();
        let db = tempfile::tempdir().unwrap();
        let ra = run_experiment(&cfg, &[AgentKind::D3pg], da.path()).unwrap();
        let rb = run_experiment(&cfg, &[AgentKind::D3pg], db.path()).unwrap();
        for (x, y) in ra[0].mean.iter().zip(&rb[0].mean) {
            assert_eq!(x.total_reward.to_bits(), y.total_reward.to_bits());
        }
    }
}
