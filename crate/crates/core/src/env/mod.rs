//! Discrete-time mobile-edge-computing environment.
//!
//! One decision step: the head-of-line task is partitioned across servers
//! according to the hybrid action, per-sub-task delays and energies are
//! computed against the current queues, sub-tasks are enqueued, and the
//! simulated clock advances by one slot while servers drain their queues.
//! The episode ends when a server's backlog delay exceeds the overload
//! threshold or the step cap is reached.

mod config;
mod ops;

pub use config::EnvConfig;
pub use ops::{
    apply_partition, completion_flag, compute_energy, compute_time, queue_delay, remaining_time,
    step_reward, subtask_delay, transmission_energy, transmission_rate, transmission_time,
    ENERGY_COEF,
};

use crate::rng::{stream_rng, STREAM_CHANNELS, STREAM_TASKS};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid channel state")]
    InvalidChannel,
    #[error("server unreachable: zero transmission rate with nonzero payload")]
    UnreachableServer,
    #[error("invalid frequency: {0}")]
    InvalidFrequency(f64),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("log argument out of domain: {0}")]
    Domain(String),
    #[error("all partition components pruned")]
    DegenerateAction,
    #[error("action violates constraints: {0}")]
    Constraint(String),
    #[error("step called on a finished episode")]
    Lifecycle,
    #[error("invalid config: {0}")]
    Config(String),
}

/// An offloadable task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: u64,
    pub user_id: usize,
    /// D_i, bits.
    pub data_bits: f64,
    /// C_i, CPU cycles.
    pub cpu_cycles: f64,
    /// Maximum tolerated latency, seconds.
    pub deadline_s: f64,
    pub arrival_step: usize,
}

/// A fraction of a task bound to one server.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTask {
    pub parent_task: u64,
    pub server_index: usize,
    pub fraction: f64,
    pub data_bits: f64,
    pub cpu_cycles: f64,
    /// Recommended frequency as a fraction of the server maximum.
    pub freq_fraction: f64,
    pub tx_time_s: f64,
    pub enqueue_time_s: f64,
}

/// Edge server state: FIFO queue plus at most one sub-task in service with
/// its remaining cycle count.
#[derive(Debug, Clone)]
pub struct EdgeServer {
    pub index: usize,
    pub f_max_hz: f64,
    pub queue: VecDeque<SubTask>,
    pub in_service: Option<(SubTask, f64)>,
    pub busy_until_s: f64,
}

impl EdgeServer {
    /// Remaining-service plus queued compute time.
    pub fn backlog_delay_s(&self) -> f64 {
        remaining_time(self, 0.0) + queue_delay(self).unwrap_or(0.0)
    }
}

/// Link realization between one user and one server.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub rayleigh_gain: f64,
    pub path_loss: f64,
    pub noise_power_w: f64,
}

/// Simplex partition vector concatenated with per-server frequency
/// fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridAction {
    pub partition: Vec<f64>,
    pub freq: Vec<f64>,
}

impl HybridAction {
    /// Checks the simplex constraint and box bounds.
    pub fn validate(&self, n_servers: usize) -> Result<(), EnvError> {
        if self.partition.len() != n_servers || self.freq.len() != n_servers {
            return Err(EnvError::Constraint(format!(
                "expected {n_servers} components, got {} / {}",
                self.partition.len(),
                self.freq.len()
            )));
        }
        let mut sum = 0.0;
        for &p in &self.partition {
            if !(0.0..=1.0).contains(&p) {
                return Err(EnvError::Constraint(format!("partition component {p} outside [0,1]")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EnvError::Constraint(format!("partition sums to {sum}")));
        }
        for &f in &self.freq {
            if !(0.0..=1.0).contains(&f) {
                return Err(EnvError::Constraint(format!("freq component {f} outside [0,1]")));
            }
        }
        Ok(())
    }

    /// Flatten to `partition ++ freq` for replay storage.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.partition.clone();
        v.extend_from_slice(&self.freq);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let k = flat.len() / 2;
        Self {
            partition: flat[..k].to_vec(),
            freq: flat[k..].to_vec(),
        }
    }
}

/// Reward decomposition carried alongside the scalar reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParts {
    pub lambda_flag: u8,
    pub energy_j: f64,
    pub max_delay_s: f64,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: f64,
    pub reward_parts: RewardParts,
    pub next_observation: Vec<f64>,
    pub done: bool,
    /// Cumulative episode counters.
    pub completed_count: u64,
    pub expired_count: u64,
}

/// Normalizer for the queue-length observation entry.
const QUEUE_LEN_NORM: f64 = 16.0;

/// The MEC environment. Cloning yields an independent copy with identical
/// future behavior (used by the greedy one-step lookahead).
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    servers: Vec<EdgeServer>,
    /// `[user][server]`
    channels: Vec<Vec<ChannelState>>,
    head_task: TaskSpec,
    now_s: f64,
    step_count: usize,
    done: bool,
    tasks_rng: ChaCha8Rng,
    completed: u64,
    expired: u64,
    subtasks_created: u64,
    subtasks_finished: u64,
    next_task_id: u64,
    /// Upper bound on any realized transmission rate, for normalization.
    rate_max_bps: f64,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let seed = cfg.seed;
        let snr_peak = 10f64.powf((cfg.snr_db + cfg.snr_jitter_db) / 10.0);
        let rate_max_bps = cfg.bandwidth_hz * (1.0 + snr_peak).log2();
        let mut env = Self {
            cfg,
            servers: Vec::new(),
            channels: Vec::new(),
            head_task: TaskSpec {
                id: 0,
                user_id: 0,
                data_bits: 0.0,
                cpu_cycles: 0.0,
                deadline_s: 1.0,
                arrival_step: 0,
            },
            now_s: 0.0,
            step_count: 0,
            done: false,
            tasks_rng: stream_rng(seed, STREAM_TASKS),
            completed: 0,
            expired: 0,
            subtasks_created: 0,
            subtasks_finished: 0,
            next_task_id: 0,
            rate_max_bps,
        };
        env.reset(seed);
        Ok(env)
    }

    pub fn cfg(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn n_servers(&self) -> usize {
        self.cfg.n_servers
    }

    /// Observation length: per server [f_max, backlog, queue len] plus per
    /// server rate plus the head task triple.
    pub fn observation_dim(&self) -> usize {
        4 * self.cfg.n_servers + 3
    }

    pub fn action_dim(&self) -> usize {
        2 * self.cfg.n_servers
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps_taken(&self) -> usize {
        self.step_count
    }

    pub fn completed_count(&self) -> u64 {
        self.completed
    }

    pub fn expired_count(&self) -> u64 {
        self.expired
    }

    pub fn head_task(&self) -> &TaskSpec {
        &self.head_task
    }

    pub fn servers(&self) -> &[EdgeServer] {
        &self.servers
    }

    pub fn subtasks_created(&self) -> u64 {
        self.subtasks_created
    }

    pub fn subtasks_finished(&self) -> u64 {
        self.subtasks_finished
    }

    pub fn subtasks_in_system(&self) -> u64 {
        self.servers
            .iter()
            .map(|s| s.queue.len() as u64 + u64::from(s.in_service.is_some()))
            .sum()
    }

    /// Clear all queues and re-draw servers, channels, and the task stream
    /// from `seed`. Identical seeds give bit-identical episodes.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut channel_rng = stream_rng(seed, STREAM_CHANNELS);
        self.tasks_rng = stream_rng(seed, STREAM_TASKS);

        self.servers = (0..self.cfg.n_servers)
            .map(|index| EdgeServer {
                index,
                f_max_hz: channel_rng.random_range(self.cfg.f_max_min_hz..=self.cfg.f_max_max_hz),
                queue: VecDeque::new(),
                in_service: None,
                busy_until_s: 0.0,
            })
            .collect();
        self.channels = (0..self.cfg.n_users)
            .map(|_| {
                (0..self.cfg.n_servers)
                    .map(|_| {
                        let jitter = channel_rng
                            .random_range(-self.cfg.snr_jitter_db..=self.cfg.snr_jitter_db);
                        let snr_lin = 10f64.powf((self.cfg.snr_db + jitter) / 10.0);
                        // composite SNR carried in the gain term
                        ChannelState {
                            bandwidth_hz: self.cfg.bandwidth_hz,
                            tx_power_w: self.cfg.tx_power_w,
                            rayleigh_gain: snr_lin,
                            path_loss: 1.0,
                            noise_power_w: self.cfg.tx_power_w,
                        }
                    })
                    .collect()
            })
            .collect();

        self.now_s = 0.0;
        self.step_count = 0;
        self.done = false;
        self.completed = 0;
        self.expired = 0;
        self.subtasks_created = 0;
        self.subtasks_finished = 0;
        self.next_task_id = 0;
        self.head_task = self.draw_task();
        self.observe()
    }

    fn draw_task(&mut self) -> TaskSpec {
        let id = self.next_task_id;
        self.next_task_id += 1;
        TaskSpec {
            id,
            user_id: self.tasks_rng.random_range(0..self.cfg.n_users),
            data_bits: self
                .tasks_rng
                .random_range(self.cfg.data_bits_min..=self.cfg.data_bits_max),
            cpu_cycles: self
                .tasks_rng
                .random_range(self.cfg.cpu_cycles_min..=self.cfg.cpu_cycles_max),
            deadline_s: self
                .tasks_rng
                .random_range(self.cfg.deadline_min_s..=self.cfg.deadline_max_s),
            arrival_step: self.step_count,
        }
    }

    /// Fixed-length observation, entries scaled to roughly [0, 1].
    pub fn observe(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.observation_dim());
        for server in &self.servers {
            obs.push(server.f_max_hz / self.cfg.f_max_max_hz);
            obs.push(server.backlog_delay_s() / self.cfg.overload_queue_delay_s);
            obs.push(server.queue.len() as f64 / QUEUE_LEN_NORM);
        }
        let user = self.head_task.user_id;
        for j in 0..self.cfg.n_servers {
            let rate = transmission_rate(&self.channels[user][j]).unwrap_or(0.0);
            obs.push(rate / self.rate_max_bps);
        }
        obs.push(self.head_task.data_bits / self.cfg.data_bits_max);
        obs.push(self.head_task.cpu_cycles / self.cfg.cpu_cycles_max);
        obs.push(self.head_task.deadline_s / self.cfg.deadline_max_s);
        debug_assert!(obs.iter().all(|x| x.is_finite()));
        obs
    }

    /// Execute one decision step.
    pub fn step(&mut self, action: &HybridAction) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::Lifecycle);
        }
        action.validate(self.cfg.n_servers)?;

        let task = self.head_task.clone();
        let mut subtasks = apply_partition(&task, action, &self.cfg)?;

        let mut delays = Vec::with_capacity(subtasks.len());
        let mut rates = Vec::with_capacity(subtasks.len());
        let mut powers = Vec::with_capacity(subtasks.len());
        for sub in &mut subtasks {
            let ch = &self.channels[task.user_id][sub.server_index];
            let server = &self.servers[sub.server_index];
            let rate = transmission_rate(ch)?;
            let tx = transmission_time(sub.data_bits, rate)?;
            let remaining = remaining_time(server, self.now_s);
            let queued = queue_delay(server)?;
            let compute = compute_time(sub.cpu_cycles, sub.freq_fraction * server.f_max_hz)?;
            sub.tx_time_s = tx;
            sub.enqueue_time_s = self.now_s;
            delays.push(subtask_delay(tx, remaining, queued, compute));
            rates.push(rate);
            powers.push(ch.tx_power_w);
        }

        let lambda = completion_flag(&delays, task.deadline_s)?;
        let max_delay = delays.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let energy = transmission_energy(&subtasks, &rates, &powers)? + compute_energy(&subtasks, &self.servers);
        let reward = step_reward(
            lambda,
            energy.max(self.cfg.eps_log),
            max_delay.max(self.cfg.eps_log),
            &self.cfg,
        )?;

        if lambda == 1 {
            self.completed += 1;
        } else {
            self.expired += 1;
        }
        self.subtasks_created += subtasks.len() as u64;
        for sub in subtasks {
            let server = &mut self.servers[sub.server_index];
            server.queue.push_back(sub);
        }

        self.advance_slot();
        self.step_count += 1;
        self.now_s += self.cfg.slot_duration_s;
        for server in &mut self.servers {
            server.busy_until_s = self.now_s + server.backlog_delay_s();
        }

        let overloaded = self
            .servers
            .iter()
            .any(|s| s.backlog_delay_s() > self.cfg.overload_queue_delay_s);
        self.done = overloaded || self.step_count >= self.cfg.max_steps;

        self.head_task = self.draw_task();
        Ok(StepOutcome {
            reward,
            reward_parts: RewardParts {
                lambda_flag: lambda,
                energy_j: energy,
                max_delay_s: max_delay,
            },
            next_observation: self.observe(),
            done: self.done,
            completed_count: self.completed,
            expired_count: self.expired,
        })
    }

    /// Drain each server for one slot of wall-clock time.
    fn advance_slot(&mut self) {
        for server in &mut self.servers {
            let mut time_left = self.cfg.slot_duration_s;
            loop {
                if server.in_service.is_none() {
                    match server.queue.pop_front() {
                        Some(sub) => {
                            let cycles = sub.cpu_cycles;
                            server.in_service = Some((sub, cycles));
                        }
                        None => break,
                    }
                }
                let (sub, remaining) = server.in_service.as_mut().unwrap();
                let freq = sub.freq_fraction * server.f_max_hz;
                let time_to_finish = *remaining / freq;
                if time_to_finish <= time_left {
                    time_left -= time_to_finish;
                    server.in_service = None;
                    self.subtasks_finished += 1;
                } else {
                    *remaining -= time_left * freq;
                    break;
                }
            }
        }
    }
}
