//! Episode loop shared by training and evaluation.
//!
//! Each episode reseeds the environment with a per-episode seed mixed from
//! the run seed, so two agents trained with the same run seed face the exact
//! same task arrivals and channel realizations regardless of how much
//! randomness each consumed.

use super::{
    ActorCritic, AgentConfig, AgentError, AgentKind, GreedyAgent, ReplayBuffer, Transition,
};
use crate::env::Env;
use crate::rng::episode_seed;

/// Either a learning agent or the search-based baseline.
pub enum AgentInstance {
    Learner(ActorCritic),
    Greedy(GreedyAgent),
}

impl AgentInstance {
    pub fn kind(&self) -> AgentKind {
        match self {
            AgentInstance::Learner(a) => a.kind,
            AgentInstance::Greedy(_) => AgentKind::Greedy,
        }
    }

    fn act(&mut self, env: &Env, obs: &[f64], explore: bool) -> Result<crate::env::HybridAction, AgentError> {
        match self {
            AgentInstance::Learner(a) => a.act(obs, explore),
            AgentInstance::Greedy(g) => g.act(env),
        }
    }
}

pub fn build_agent(kind: AgentKind, env: &Env, cfg: &AgentConfig, run_seed: u64) -> AgentInstance {
    match kind {
        AgentKind::Greedy => AgentInstance::Greedy(GreedyAgent::new(
            cfg.greedy_candidates,
            run_seed,
            kind.index(),
        )),
        _ => AgentInstance::Learner(ActorCritic::new(
            kind,
            env.observation_dim(),
            env.n_servers(),
            cfg.clone(),
            run_seed,
        )),
    }
}

/// Raw per-episode accumulators; the harness derives ratios from these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub total_reward: f64,
    pub completed_tasks: u64,
    pub expired_tasks: u64,
    pub energy_total_j: f64,
    /// Sum over steps of the worst sub-task delay.
    pub time_cost_sum_s: f64,
    pub steps: usize,
}

impl EpisodeStats {
    pub fn dispatched(&self) -> u64 {
        self.completed_tasks + self.expired_tasks
    }
}

fn run_episode(
    env: &mut Env,
    agent: &mut AgentInstance,
    episode: usize,
    seed: u64,
    explore: bool,
    buffer: Option<&mut ReplayBuffer>,
) -> Result<EpisodeStats, AgentError> {
    let mut obs = env.reset(seed);
    if let AgentInstance::Learner(a) = agent {
        a.reset_exploration();
    }
    let mut stats = EpisodeStats {
        episode,
        total_reward: 0.0,
        completed_tasks: 0,
        expired_tasks: 0,
        energy_total_j: 0.0,
        time_cost_sum_s: 0.0,
        steps: 0,
    };
    let mut buffer = buffer;
    loop {
        let action = agent.act(env, &obs, explore)?;
        let out = env.step(&action)?;
        stats.total_reward += out.reward;
        stats.energy_total_j += out.reward_parts.energy_j;
        stats.time_cost_sum_s += out.reward_parts.max_delay_s;
        stats.steps += 1;
        if let Some(buf) = buffer.as_deref_mut() {
            buf.push(Transition {
                state: obs,
                action: action.to_flat(),
                reward: out.reward,
                next_state: out.next_observation.clone(),
                done: out.done,
            });
        }
        obs = out.next_observation;
        if out.done {
            stats.completed_tasks = out.completed_count;
            stats.expired_tasks = out.expired_count;
            break;
        }
    }
    Ok(stats)
}

/// Train `agent` for `episodes` episodes and return per-episode stats.
///
/// Learners replay-sample and update every `learn_every` environment steps
/// once the buffer holds `warmup_steps` transitions; the greedy baseline
/// just plays. A non-finite loss or gradient aborts with the episode index.
pub fn train(
    env: &mut Env,
    agent: &mut AgentInstance,
    episodes: usize,
    run_seed: u64,
) -> Result<Vec<EpisodeStats>, AgentError> {
    let mut all = Vec::with_capacity(episodes);
    match agent {
        AgentInstance::Greedy(_) => {
            for episode in 0..episodes {
                let seed = episode_seed(run_seed, episode as u64);
                all.push(run_episode(env, agent, episode, seed, true, None)?);
            }
        }
        AgentInstance::Learner(_) => {
            let (warmup, learn_every, capacity, batch) = {
                let AgentInstance::Learner(a) = &*agent else { unreachable!() };
                (
                    a.cfg().warmup_steps.max(a.cfg().batch_size),
                    a.cfg().learn_every,
                    a.cfg().buffer_capacity,
                    a.cfg().batch_size,
                )
            };
            debug_assert!(capacity >= batch);
            let mut buffer = ReplayBuffer::new(capacity);
            let mut global_step: usize = 0;
            for episode in 0..episodes {
                let seed = episode_seed(run_seed, episode as u64);
                let mut obs = env.reset(seed);
                let AgentInstance::Learner(a) = agent else { unreachable!() };
                a.reset_exploration();
                let mut stats = EpisodeStats {
                    episode,
                    total_reward: 0.0,
                    completed_tasks: 0,
                    expired_tasks: 0,
                    energy_total_j: 0.0,
                    time_cost_sum_s: 0.0,
                    steps: 0,
                };
                loop {
                    let action = a.act(&obs, true)?;
                    let out = env.step(&action)?;
                    buffer.push(Transition {
                        state: obs,
                        action: action.to_flat(),
                        reward: out.reward,
                        next_state: out.next_observation.clone(),
                        done: out.done,
                    });
                    stats.total_reward += out.reward;
                    stats.energy_total_j += out.reward_parts.energy_j;
                    stats.time_cost_sum_s += out.reward_parts.max_delay_s;
                    stats.steps += 1;
                    global_step += 1;
                    if buffer.len() >= warmup && global_step % learn_every == 0 {
                        a.learn(&buffer).map_err(|e| match e {
                            AgentError::Nn(source) => AgentError::Divergence { episode, source },
                            other => other,
                        })?;
                    }
                    obs = out.next_observation;
                    if out.done {
                        stats.completed_tasks = out.completed_count;
                        stats.expired_tasks = out.expired_count;
                        break;
                    }
                }
                all.push(stats);
            }
        }
    }
    Ok(all)
}

/// Play one episode without exploration or learning.
pub fn eval_episode(
    env: &mut Env,
    agent: &mut AgentInstance,
    episode: usize,
    run_seed: u64,
) -> Result<EpisodeStats, AgentError> {
    let seed = episode_seed(run_seed, episode as u64);
    run_episode(env, agent, episode, seed, false, None)
}
