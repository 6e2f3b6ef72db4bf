//! MEC task-partitioning simulator and D3PG agent stack.
//!
//! Crate layout:
//! - [`env`]: discrete-time edge-computing environment (queues, channels,
//!   delay/energy accounting, reward).
//! - [`nn`]: dense networks with analytic backprop and Adam.
//! - [`policy`]: Dirichlet head, Ornstein-Uhlenbeck and Gaussian exploration,
//!   softmax.
//! - [`agents`]: replay buffer, actor-critic learners (D3PG, DDPG,
//!   DDPG-softmax, TD3), greedy baseline, training loop.
//! - [`harness`]: experiment configs, seeded multi-run execution, CSV
//!   metrics.

pub mod agents;
pub mod env;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod rng;
