//! Decision-makers: replay buffer, the actor-critic family (D3PG, DDPG,
//! DDPG-softmax, TD3), the greedy one-step baseline, and the training loop.

mod actor_critic;
mod greedy;
mod replay;
mod train;

pub use actor_critic::{ActorCritic, LearnDiag, PartitionHead};
pub use greedy::{greedy_act, greedy_act_detailed, GreedyAgent, GreedyDecision};
pub use replay::{ReplayBuffer, Transition};
pub use train::{build_agent, eval_episode, train, AgentInstance, EpisodeStats};

use crate::env::EnvError;
use crate::nn::NnError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("buffer holds {have} transitions, need {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("training diverged at episode {episode}: {source}")]
    Divergence {
        episode: usize,
        source: NnError,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// The five decision-makers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    D3pg,
    Ddpg,
    DdpgSoftmax,
    Td3,
    Greedy,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::D3pg,
        AgentKind::Ddpg,
        AgentKind::DdpgSoftmax,
        AgentKind::Td3,
        AgentKind::Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::D3pg => "d3pg",
            AgentKind::Ddpg => "ddpg",
            AgentKind::DdpgSoftmax => "ddpg_softmax",
            AgentKind::Td3 => "td3",
            AgentKind::Greedy => "greedy",
        }
    }

    /// Stable index used for exploration-stream offsets.
    pub fn index(self) -> u64 {
        match self {
            AgentKind::D3pg => 0,
            AgentKind::Ddpg => 1,
            AgentKind::DdpgSoftmax => 2,
            AgentKind::Td3 => 3,
            AgentKind::Greedy => 4,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "d3pg" => Ok(AgentKind::D3pg),
            "ddpg" => Ok(AgentKind::Ddpg),
            "ddpg_softmax" => Ok(AgentKind::DdpgSoftmax),
            "td3" => Ok(AgentKind::Td3),
            "greedy" => Ok(AgentKind::Greedy),
            other => Err(format!("unknown agent kind {other:?}")),
        }
    }
}

/// Learner hyperparameters. Field names double as `[agent]` config keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    pub policy_delay: usize,
    pub smoothing_sigma: f64,
    pub smoothing_clip: f64,
    pub lr: f64,
    /// Hidden layer widths of actor and critic.
    pub hidden: Vec<usize>,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    /// Learn every this many environment steps once warm.
    pub learn_every: usize,
    /// Floor added to exp(logits) in the Dirichlet head.
    pub dirichlet_eps: f64,
    /// Candidate count for the greedy baseline.
    pub greedy_candidates: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            batch_size: 256,
            tau: 0.005,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            policy_delay: 2,
            smoothing_sigma: 0.2,
            smoothing_clip: 0.5,
            lr: 5e-4,
            hidden: vec![256, 512, 256],
            ou_theta: 0.15,
            ou_sigma: 0.2,
            learn_every: 1,
            dirichlet_eps: 1e-6,
            greedy_candidates: 64,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma must be in [0,1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("tau must be in (0,1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.policy_delay == 0 {
            return Err("batch_size, buffer_capacity, policy_delay must be nonzero".into());
        }
        if self.learn_every == 0 {
            return Err("learn_every must be nonzero".into());
        }
        if self.hidden.is_empty() {
            return Err("need at least one hidden layer".into());
        }
        Ok(())
    }
}

/// Bootstrapped TD targets: `y_i = r_i + gamma (1 - done_i) q_next_i`.
pub fn td_target(rewards: &[f64], q_next: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(q_next)
        .zip(dones)
        .map(|((&r, &q), &d)| r + gamma * if d { 0.0 } else { q })
        .collect()
}

/// Projection used by the unconstrained DDPG/TD3 baselines: clamp to [0, 1]
/// and renormalize; an all-zero result falls back to the uniform point.
pub fn project_clamp_simplex(raw: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = raw.iter().map(|&x| x.clamp(0.0, 1.0)).collect();
    let sum: f64 = clamped.iter().sum();
    if sum <= 1e-12 {
        vec![1.0 / raw.len() as f64; raw.len()]
    } else {
        clamped.into_iter().map(|x| x / sum).collect()
    }
}
