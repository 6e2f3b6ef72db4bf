//! The actor-critic family behind D3PG and its learned baselines.
//!
//! One struct covers all four learners; they differ in the partition head,
//! the critic count, the policy-update cadence, and whether target actions
//! get smoothing noise on the frequency branch:
//!
//! | agent        | head      | critics | policy delay | smoothing |
//! |--------------|-----------|---------|--------------|-----------|
//! | d3pg         | dirichlet | 1       | configured   | yes       |
//! | ddpg         | raw       | 1       | 1            | no        |
//! | ddpg_softmax | softmax   | 1       | configured   | yes       |
//! | td3          | raw       | 2       | configured   | yes       |
//!
//! During learning the differentiable partition sub-action is the Dirichlet
//! mean (or softmax / raw output); sampling is exploration only. Smoothing
//! and exploration noise touch the frequency branch only — the partition
//! branch explores through the Dirichlet draw itself.

use super::{
    project_clamp_simplex, td_target, AgentConfig, AgentError, AgentKind, ReplayBuffer,
};
use crate::env::HybridAction;
use crate::nn::{
    read_adam, read_net, sigmoid, soft_update, write_adam, write_net, Activation, Adam, DenseNet,
    NnError,
};
use crate::policy::{
    clipped_noise, concentration_from_logits, dirichlet_mean, dirichlet_mean_logit_grad,
    dirichlet_sample, softmax, softmax_grad, OuNoise,
};
use crate::rng::{
    agent_offset, stream_rng, STREAM_EXPLORATION, STREAM_INIT, STREAM_REPLAY, STREAM_SMOOTHING,
};
use ndarray::{concatenate, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionHead {
    Dirichlet,
    Softmax,
    Raw,
}

/// Diagnostics from one learn call.
#[derive(Debug, Clone, Copy, Default)]
pub struct LearnDiag {
    /// Pre-step MSE of the first critic.
    pub critic_loss: f64,
    /// Mean Q of the differentiable action, when the actor was updated.
    pub actor_objective: Option<f64>,
}

pub struct ActorCritic {
    pub kind: AgentKind,
    head: PartitionHead,
    n_servers: usize,
    obs_dim: usize,
    actor: DenseNet,
    actor_target: DenseNet,
    critics: Vec<DenseNet>,
    critic_targets: Vec<DenseNet>,
    actor_opt: Adam,
    critic_opts: Vec<Adam>,
    cfg: AgentConfig,
    policy_delay: usize,
    smoothing: bool,
    ou_freq: OuNoise,
    ou_part: Option<OuNoise>,
    freq_rng: ChaCha8Rng,
    part_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    smoothing_rng: ChaCha8Rng,
    critic_updates: u64,
}

fn head_for(kind: AgentKind) -> (PartitionHead, usize, bool) {
    // (head, critic count, smoothing)
    match kind {
        AgentKind::D3pg => (PartitionHead::Dirichlet, 1, true),
        AgentKind::Ddpg => (PartitionHead::Raw, 1, false),
        AgentKind::DdpgSoftmax => (PartitionHead::Softmax, 1, true),
        AgentKind::Td3 => (PartitionHead::Raw, 2, true),
        AgentKind::Greedy => panic!("greedy is not an actor-critic learner"),
    }
}

impl ActorCritic {
    pub fn new(
        kind: AgentKind,
        obs_dim: usize,
        n_servers: usize,
        cfg: AgentConfig,
        run_seed: u64,
    ) -> Self {
        let (head, n_critics, smoothing) = head_for(kind);
        let policy_delay = if kind == AgentKind::Ddpg { 1 } else { cfg.policy_delay };

        let mut init_rng = stream_rng(run_seed, STREAM_INIT);
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend_from_slice(&cfg.hidden);
        actor_sizes.push(2 * n_servers);
        let mut critic_sizes = vec![obs_dim + 2 * n_servers];
        critic_sizes.extend_from_slice(&cfg.hidden);
        critic_sizes.push(1);
        let mut acts = vec![Activation::Relu; cfg.hidden.len()];
        acts.push(Activation::Linear);

        let actor = DenseNet::xavier(&actor_sizes, &acts, &mut init_rng);
        let critics: Vec<DenseNet> = (0..n_critics)
            .map(|_| DenseNet::xavier(&critic_sizes, &acts, &mut init_rng))
            .collect();
        let actor_target = actor.clone();
        let critic_targets = critics.clone();
        let actor_opt = Adam::new(&actor, cfg.lr);
        let critic_opts = critics.iter().map(|c| Adam::new(c, cfg.lr)).collect();

        let offset_seed = run_seed ^ agent_offset(kind.index());
        let ou_part = match head {
            PartitionHead::Raw => Some(OuNoise::new(n_servers, cfg.ou_theta, cfg.ou_sigma)),
            _ => None,
        };
        Self {
            kind,
            head,
            n_servers,
            obs_dim,
            actor,
            actor_target,
            critics,
            critic_targets,
            actor_opt,
            critic_opts,
            cfg: cfg.clone(),
            policy_delay,
            smoothing,
            ou_freq: OuNoise::new(n_servers, cfg.ou_theta, cfg.ou_sigma),
            ou_part,
            // The frequency exploration stream deliberately has no agent
            // offset: paired agents share the same OU draws.
            freq_rng: stream_rng(run_seed, STREAM_EXPLORATION),
            part_rng: stream_rng(offset_seed, STREAM_EXPLORATION),
            replay_rng: stream_rng(offset_seed, STREAM_REPLAY),
            smoothing_rng: stream_rng(offset_seed, STREAM_SMOOTHING),
            critic_updates: 0,
        }
    }

    pub fn cfg(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn head(&self) -> PartitionHead {
        self.head
    }

    pub fn critic_update_count(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_update_count(&self) -> u64 {
        self.actor_opt.step_count
    }

    pub fn reset_exploration(&mut self) {
        self.ou_freq.reset();
        if let Some(ou) = &mut self.ou_part {
            ou.reset();
        }
    }

    /// Deterministic partition head applied to one logit row.
    fn partition_det(&self, z_phi: &[f64]) -> Vec<f64> {
        match self.head {
            PartitionHead::Dirichlet => {
                dirichlet_mean(&concentration_from_logits(z_phi, self.cfg.dirichlet_eps))
            }
            PartitionHead::Softmax => softmax(z_phi),
            PartitionHead::Raw => z_phi.to_vec(),
        }
    }

    /// Select an action for `obs`. With `explore`, the partition branch
    /// samples (Dirichlet) or perturbs (softmax logits / raw values) and the
    /// frequency branch adds OU noise; without it the action is the
    /// deterministic policy output.
    pub fn act(&mut self, obs: &[f64], explore: bool) -> Result<HybridAction, AgentError> {
        let k = self.n_servers;
        let (z, _) = self.actor.forward(&ndarray::Array1::from(obs.to_vec()))?;
        let z = z.to_vec();
        let (z_phi, z_f) = z.split_at(k);

        let partition = if explore {
            match self.head {
                PartitionHead::Dirichlet => {
                    let p = concentration_from_logits(z_phi, self.cfg.dirichlet_eps);
                    dirichlet_sample(&p, &mut self.part_rng)
                }
                PartitionHead::Softmax => {
                    let noise = clipped_noise(
                        self.cfg.smoothing_sigma,
                        self.cfg.smoothing_clip,
                        k,
                        &mut self.part_rng,
                    );
                    let noisy: Vec<f64> = z_phi.iter().zip(&noise).map(|(z, n)| z + n).collect();
                    softmax(&noisy)
                }
                PartitionHead::Raw => {
                    let ou = self.ou_part.as_mut().unwrap();
                    let noise = ou.step(&mut self.part_rng);
                    let noisy: Vec<f64> = z_phi.iter().zip(noise).map(|(z, n)| z + n).collect();
                    project_clamp_simplex(&noisy)
                }
            }
        } else {
            match self.head {
                PartitionHead::Raw => project_clamp_simplex(z_phi),
                _ => self.partition_det(z_phi),
            }
        };

        let mut freq: Vec<f64> = z_f.iter().map(|&z| sigmoid(z)).collect();
        if explore {
            let noise = self.ou_freq.step(&mut self.freq_rng);
            for (f, n) in freq.iter_mut().zip(noise) {
                *f = (*f + n).clamp(0.0, 1.0);
            }
        }
        let action = HybridAction { partition, freq };
        debug_assert!(action.validate(k).is_ok());
        Ok(action)
    }

    /// One learn step: critic regression toward the bootstrapped target,
    /// plus (every `policy_delay` critic steps) a deterministic
    /// policy-gradient ascent step on the actor and soft target updates.
    pub fn learn(&mut self, buffer: &ReplayBuffer) -> Result<LearnDiag, AgentError> {
        let n = self.cfg.batch_size;
        let k = self.n_servers;
        let idx = buffer.sample_indices(n, &mut self.replay_rng)?;

        let states = Array2::from_shape_fn((n, self.obs_dim), |(i, j)| {
            buffer.get(idx[i]).state[j]
        });
        let actions = Array2::from_shape_fn((n, 2 * k), |(i, j)| buffer.get(idx[i]).action[j]);
        let next_states = Array2::from_shape_fn((n, self.obs_dim), |(i, j)| {
            buffer.get(idx[i]).next_state[j]
        });
        let rewards: Vec<f64> = idx.iter().map(|&i| buffer.get(i).reward).collect();
        let dones: Vec<bool> = idx.iter().map(|&i| buffer.get(i).done).collect();

        // target actions a' = mu'(s') with smoothing on the frequency branch
        let (z_next, _) = self.actor_target.forward_batch(&next_states)?;
        let mut next_actions = Array2::zeros((n, 2 * k));
        for i in 0..n {
            let row = z_next.row(i);
            let z_phi: Vec<f64> = row.iter().take(k).cloned().collect();
            let partition = match self.head {
                PartitionHead::Raw => project_clamp_simplex(&z_phi),
                _ => self.partition_det(&z_phi),
            };
            let noise = if self.smoothing {
                clipped_noise(
                    self.cfg.smoothing_sigma,
                    self.cfg.smoothing_clip,
                    k,
                    &mut self.smoothing_rng,
                )
            } else {
                vec![0.0; k]
            };
            for j in 0..k {
                next_actions[[i, j]] = partition[j];
                next_actions[[i, k + j]] = (sigmoid(row[k + j]) + noise[j]).clamp(0.0, 1.0);
            }
        }

        let next_sa = concatenate![Axis(1), next_states, next_actions];
        let mut q_next: Option<Vec<f64>> = None;
        for target in &self.critic_targets {
            let (q, _) = target.forward_batch(&next_sa)?;
            let q: Vec<f64> = q.column(0).to_vec();
            q_next = Some(match q_next {
                None => q,
                Some(prev) => prev.into_iter().zip(q).map(|(a, b)| a.min(b)).collect(),
            });
        }
        let y = td_target(&rewards, &q_next.unwrap(), &dones, self.cfg.gamma);

        // critic regression
        let sa = concatenate![Axis(1), states.clone(), actions];
        let mut first_loss = 0.0;
        for (c, (critic, opt)) in self
            .critics
            .iter_mut()
            .zip(&mut self.critic_opts)
            .enumerate()
        {
            let (q, cache) = critic.forward_batch(&sa)?;
            let mut grad_out = Array2::zeros((n, 1));
            let mut loss = 0.0;
            for i in 0..n {
                let diff = q[[i, 0]] - y[i];
                loss += diff * diff;
                grad_out[[i, 0]] = 2.0 * diff / n as f64;
            }
            loss /= n as f64;
            if !loss.is_finite() {
                return Err(AgentError::Nn(NnError::Divergence));
            }
            if c == 0 {
                first_loss = loss;
            }
            let (grads, _) = critic.backward_batch(&cache, &grad_out)?;
            opt.step(critic, &grads)?;
        }
        self.critic_updates += 1;

        // delayed actor + target updates
        let mut actor_objective = None;
        if self.critic_updates % self.policy_delay as u64 == 0 {
            actor_objective = Some(self.actor_step(&states)?);
            soft_update(&mut self.actor_target, &self.actor, self.cfg.tau);
            for (target, local) in self.critic_targets.iter_mut().zip(&self.critics) {
                soft_update(target, local, self.cfg.tau);
            }
        }

        Ok(LearnDiag {
            critic_loss: first_loss,
            actor_objective,
        })
    }

    /// Ascend mean Q(s, a~(s)) through the differentiable action heads.
    /// Critic parameters are read, never written.
    fn actor_step(&mut self, states: &Array2<f64>) -> Result<f64, AgentError> {
        let n = states.nrows();
        let k = self.n_servers;
        let (z, actor_cache) = self.actor.forward_batch(states)?;
        let mut a_tilde = Array2::zeros((n, 2 * k));
        for i in 0..n {
            let row = z.row(i);
            let z_phi: Vec<f64> = row.iter().take(k).cloned().collect();
            let partition = self.partition_det(&z_phi);
            for j in 0..k {
                a_tilde[[i, j]] = partition[j];
                a_tilde[[i, k + j]] = sigmoid(row[k + j]);
            }
        }
        let sa = concatenate![Axis(1), states.clone(), a_tilde.clone()];
        let (q, critic_cache) = self.critics[0].forward_batch(&sa)?;
        let objective = q.column(0).sum() / n as f64;
        if !objective.is_finite() {
            return Err(AgentError::Nn(NnError::Divergence));
        }

        // maximize mean Q  <=>  descend on -mean Q
        let grad_out = Array2::from_elem((n, 1), -1.0 / n as f64);
        let (_, input_grad) = self.critics[0].backward_batch(&critic_cache, &grad_out)?;

        let mut dz = Array2::zeros((n, 2 * k));
        for i in 0..n {
            let row = z.row(i);
            let z_phi: Vec<f64> = row.iter().take(k).cloned().collect();
            let da_phi: Vec<f64> = (0..k)
                .map(|j| input_grad[[i, self.obs_dim + j]])
                .collect();
            let dz_phi = match self.head {
                PartitionHead::Dirichlet => {
                    dirichlet_mean_logit_grad(&z_phi, self.cfg.dirichlet_eps, &da_phi)
                }
                PartitionHead::Softmax => softmax_grad(&softmax(&z_phi), &da_phi),
                PartitionHead::Raw => da_phi,
            };
            for j in 0..k {
                dz[[i, j]] = dz_phi[j];
                let s = a_tilde[[i, k + j]];
                dz[[i, k + j]] = input_grad[[i, self.obs_dim + k + j]] * s * (1.0 - s);
            }
        }
        let (grads, _) = self.actor.backward_batch(&actor_cache, &dz)?;
        self.actor_opt.step(&mut self.actor, &grads)?;
        Ok(objective)
    }

    /// Save all networks and optimizer state under `dir`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<(), AgentError> {
        fs::create_dir_all(dir).map_err(NnError::Io)?;
        let nets: Vec<(String, &DenseNet)> = self.net_manifest();
        for (name, net) in &nets {
            let file = fs::File::create(dir.join(format!("{name}.net"))).map_err(NnError::Io)?;
            write_net(&mut BufWriter::new(file), net)?;
        }
        let file = fs::File::create(dir.join("actor.adam")).map_err(NnError::Io)?;
        write_adam(&mut BufWriter::new(file), &self.actor_opt, &self.actor)?;
        for (i, (opt, net)) in self.critic_opts.iter().zip(&self.critics).enumerate() {
            let file =
                fs::File::create(dir.join(format!("critic{i}.adam"))).map_err(NnError::Io)?;
            write_adam(&mut BufWriter::new(file), opt, net)?;
        }
        let meta = CheckpointMeta {
            kind: self.kind,
            obs_dim: self.obs_dim,
            n_servers: self.n_servers,
            critic_updates: self.critic_updates,
            cfg: self.cfg.clone(),
        };
        fs::write(
            dir.join("meta.json"),
            serde_json::to_string_pretty(&meta).expect("serializable meta"),
        )
        .map_err(NnError::Io)?;
        Ok(())
    }

    /// Restore a learner saved by [`save_checkpoint`]. Exploration and
    /// sampling streams restart from `run_seed`.
    pub fn load_checkpoint(dir: &Path, run_seed: u64) -> Result<Self, AgentError> {
        let meta: CheckpointMeta = serde_json::from_str(
            &fs::read_to_string(dir.join("meta.json")).map_err(NnError::Io)?,
        )
        .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let mut agent = Self::new(meta.kind, meta.obs_dim, meta.n_servers, meta.cfg, run_seed);
        let read = |name: &str| -> Result<DenseNet, AgentError> {
            let file = fs::File::open(dir.join(format!("{name}.net"))).map_err(NnError::Io)?;
            Ok(read_net(BufReader::new(file))?)
        };
        agent.actor = read("actor")?;
        agent.actor_target = read("actor_target")?;
        for i in 0..agent.critics.len() {
            agent.critics[i] = read(&format!("critic{i}"))?;
            agent.critic_targets[i] = read(&format!("critic{i}_target"))?;
        }
        let file = fs::File::open(dir.join("actor.adam")).map_err(NnError::Io)?;
        agent.actor_opt = read_adam(BufReader::new(file), &agent.actor)?;
        for i in 0..agent.critics.len() {
            let file =
                fs::File::open(dir.join(format!("critic{i}.adam"))).map_err(NnError::Io)?;
            agent.critic_opts[i] = read_adam(BufReader::new(file), &agent.critics[i])?;
        }
        agent.critic_updates = meta.critic_updates;
        Ok(agent)
    }

    fn net_manifest(&self) -> Vec<(String, &DenseNet)> {
        let mut nets = vec![
            ("actor".to_string(), &self.actor),
            ("actor_target".to_string(), &self.actor_target),
        ];
        for (i, (c, t)) in self.critics.iter().zip(&self.critic_targets).enumerate() {
            nets.push((format!("critic{i}"), c));
            nets.push((format!("critic{i}_target"), t));
        }
        nets
    }

    #[cfg(test)]
    pub(crate) fn critics_mut(&mut self) -> &mut Vec<DenseNet> {
        &mut self.critics
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    kind: AgentKind,
    obs_dim: usize,
    n_servers: usize,
    critic_updates: u64,
    cfg: AgentConfig,
}
