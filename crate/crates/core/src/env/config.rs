//! Environment configuration.

use super::EnvError;
use serde::{Deserialize, Serialize};

/// All knobs of the MEC environment. Field names double as config-file keys
/// under the `[env]` section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Number of edge servers (K).
    pub n_servers: usize,
    /// Number of online users (N).
    pub n_users: usize,
    /// Task data size range in bits.
    pub data_bits_min: f64,
    pub data_bits_max: f64,
    /// Task computing size range in CPU cycles.
    pub cpu_cycles_min: f64,
    pub cpu_cycles_max: f64,
    /// Server max-frequency range in Hz.
    pub f_max_min_hz: f64,
    pub f_max_max_hz: f64,
    /// Nominal composite signal-to-noise ratio in dB.
    pub snr_db: f64,
    /// Uniform per-(user, server) SNR jitter half-width in dB.
    pub snr_jitter_db: f64,
    /// Channel bandwidth in Hz.
    pub bandwidth_hz: f64,
    /// Transmission power in Watts.
    pub tx_power_w: f64,
    /// Reward weights.
    pub alpha: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    /// Per-step stability incentive.
    pub incentive_c: f64,
    /// Task deadline range in seconds.
    pub deadline_min_s: f64,
    pub deadline_max_s: f64,
    /// Episode step cap.
    pub max_steps: usize,
    /// A server whose backlog delay exceeds this is overloaded and ends the
    /// episode.
    pub overload_queue_delay_s: f64,
    /// Partition fractions below this are pruned and their mass renormalized
    /// over the surviving entries.
    pub partition_prune_eps: f64,
    /// Minimum frequency fraction for a dispatched sub-task.
    pub freq_floor: f64,
    /// Wall-clock length of one decision slot in seconds.
    pub slot_duration_s: f64,
    /// Floor for log arguments in the reward.
    pub eps_log: f64,
    /// Base seed for the environment streams.
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_servers: 5,
            n_users: 50,
            data_bits_min: 2e5,
            data_bits_max: 2e7,
            cpu_cycles_min: 8e6,
            cpu_cycles_max: 1e7,
            f_max_min_hz: 2e9,
            f_max_max_hz: 8e9,
            snr_db: 100.0,
            snr_jitter_db: 10.0,
            bandwidth_hz: 1e6,
            tx_power_w: 0.5,
            alpha: 0.5,
            w1: 2.0,
            w2: 0.2,
            w3: 0.05,
            incentive_c: 0.05,
            deadline_min_s: 0.15,
            deadline_max_s: 0.6,
            max_steps: 200,
            overload_queue_delay_s: 10.0,
            partition_prune_eps: 1e-3,
            freq_floor: 0.05,
            slot_duration_s: 0.05,
            eps_log: 1e-6,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("data_bits_min", self.data_bits_min),
            ("cpu_cycles_min", self.cpu_cycles_min),
            ("f_max_min_hz", self.f_max_min_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
            ("deadline_min_s", self.deadline_min_s),
            ("overload_queue_delay_s", self.overload_queue_delay_s),
            ("slot_duration_s", self.slot_duration_s),
            ("eps_log", self.eps_log),
            ("freq_floor", self.freq_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnvError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_servers == 0 || self.n_users == 0 {
            return Err(EnvError::Config("n_servers and n_users must be nonzero".into()));
        }
        for (name, lo, hi) in [
            ("data_bits", self.data_bits_min, self.data_bits_max),
            ("cpu_cycles", self.cpu_cycles_min, self.cpu_cycles_max),
            ("f_max_hz", self.f_max_min_hz, self.f_max_max_hz),
            ("deadline_s", self.deadline_min_s, self.deadline_max_s),
        ] {
            if !(hi >= lo) {
                return Err(EnvError::Config(format!("{name} range inverted: [{lo}, {hi}]")));
            }
        }
        if self.max_steps == 0 {
            return Err(EnvError::Config("max_steps must be nonzero".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(EnvError::Config(format!("alpha must be in [0,1], got {}", self.alpha)));
        }
        if self.partition_prune_eps >= 1.0 / self.n_servers as f64 {
            return Err(EnvError::Config(
                "partition_prune_eps must be below 1/n_servers".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.freq_floor) {
            return Err(EnvError::Config("freq_floor must be in (0,1]".into()));
        }
        Ok(())
    }
}
