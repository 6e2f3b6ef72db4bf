//! Per-equation building blocks of the delay, energy, and reward model.

use super::{ChannelState, EdgeServer, EnvConfig, EnvError, HybridAction, SubTask, TaskSpec};

/// Frequency-dependent energy coefficient (J / (Hz^2 * cycle)).
pub const ENERGY_COEF: f64 = 1e-26;

/// Shannon rate of the channel in bits per second:
/// `B * log2(1 + P h L / N0)`.
pub fn transmission_rate(ch: &ChannelState) -> Result<f64, EnvError> {
    let vals = [
        ch.bandwidth_hz,
        ch.tx_power_w,
        ch.rayleigh_gain,
        ch.path_loss,
        ch.noise_power_w,
    ];
    if vals.iter().any(|v| !v.is_finite() || *v < 0.0) || ch.noise_power_w == 0.0 {
        return Err(EnvError::InvalidChannel);
    }
    let snr = ch.tx_power_w * ch.rayleigh_gain * ch.path_loss / ch.noise_power_w;
    Ok(ch.bandwidth_hz * (1.0 + snr).log2())
}

/// Time to push `data_bits` through a link of `rate_bps`.
pub fn transmission_time(data_bits: f64, rate_bps: f64) -> Result<f64, EnvError> {
    if data_bits == 0.0 {
        return Ok(0.0);
    }
    if rate_bps <= 0.0 {
        return Err(EnvError::UnreachableServer);
    }
    Ok(data_bits / rate_bps)
}

/// Remaining compute time of the sub-task currently in service, 0 if idle.
pub fn remaining_time(server: &EdgeServer, _now_s: f64) -> f64 {
    match &server.in_service {
        None => 0.0,
        Some((sub, remaining_cycles)) => {
            remaining_cycles / (sub.freq_fraction * server.f_max_hz)
        }
    }
}

/// Total compute time of everything waiting in the FIFO queue (excludes the
/// in-service item).
pub fn queue_delay(server: &EdgeServer) -> Result<f64, EnvError> {
    let mut total = 0.0;
    for sub in &server.queue {
        if sub.freq_fraction <= 0.0 {
            return Err(EnvError::InvalidState(
                "queued sub-task with zero frequency".into(),
            ));
        }
        total += sub.cpu_cycles / (sub.freq_fraction * server.f_max_hz);
    }
    Ok(total)
}

/// `cycles / frequency`.
pub fn compute_time(cpu_cycles: f64, effective_freq_hz: f64) -> Result<f64, EnvError> {
    if cpu_cycles == 0.0 {
        return Ok(0.0);
    }
    if effective_freq_hz <= 0.0 {
        return Err(EnvError::InvalidFrequency(effective_freq_hz));
    }
    Ok(cpu_cycles / effective_freq_hz)
}

/// Sub-task delay decomposition; the summation order is fixed.
pub fn subtask_delay(tx: f64, remaining: f64, queue: f64, compute: f64) -> f64 {
    debug_assert!(tx >= 0.0 && remaining >= 0.0 && queue >= 0.0 && compute >= 0.0);
    tx + remaining + queue + compute
}

/// 1 iff every sub-task finishes by the deadline (boundary inclusive).
pub fn completion_flag(delays: &[f64], deadline_s: f64) -> Result<u8, EnvError> {
    if delays.is_empty() {
        return Err(EnvError::InvalidArgument("empty delay vector".into()));
    }
    debug_assert!(deadline_s > 0.0);
    let max = delays.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(if max <= deadline_s { 1 } else { 0 })
}

/// Total transmission energy: `sum_j (D_j / rate_j) * P_j`.
pub fn transmission_energy(
    subtasks: &[SubTask],
    rates_bps: &[f64],
    powers_w: &[f64],
) -> Result<f64, EnvError> {
    debug_assert_eq!(subtasks.len(), rates_bps.len());
    debug_assert_eq!(subtasks.len(), powers_w.len());
    let mut total = 0.0;
    for ((sub, &rate), &power) in subtasks.iter().zip(rates_bps).zip(powers_w) {
        total += transmission_time(sub.data_bits, rate)? * power;
    }
    Ok(total)
}

/// Total compute energy: `sum_j c * f_j^2 * C_j` with the effective
/// per-sub-task frequency.
pub fn compute_energy(subtasks: &[SubTask], servers: &[EdgeServer]) -> f64 {
    subtasks
        .iter()
        .map(|sub| {
            let f = sub.freq_fraction * servers[sub.server_index].f_max_hz;
            ENERGY_COEF * f * f * sub.cpu_cycles
        })
        .sum()
}

/// Per-step reward:
/// `alpha w1 L - (1 - alpha) w2 ln(E) - w3 ln(max delay) + C`.
///
/// Callers clamp near-zero energy/delay with the `eps_log` floor before
/// calling; passing a non-positive value is an error here.
pub fn step_reward(
    flag: u8,
    energy_j: f64,
    max_delay_s: f64,
    cfg: &EnvConfig,
) -> Result<f64, EnvError> {
    if energy_j <= 0.0 || max_delay_s <= 0.0 {
        return Err(EnvError::Domain(format!(
            "log argument out of domain: energy {energy_j}, delay {max_delay_s}"
        )));
    }
    Ok(cfg.alpha * cfg.w1 * f64::from(flag)
        - (1.0 - cfg.alpha) * cfg.w2 * energy_j.ln()
        - cfg.w3 * max_delay_s.ln()
        + cfg.incentive_c)
}

/// Split a task according to the partition vector. Fractions below the prune
/// threshold are dropped and the surviving fractions renormalized; each
/// sub-task carries its floored frequency fraction.
pub fn apply_partition(
    task: &TaskSpec,
    action: &HybridAction,
    cfg: &EnvConfig,
) -> Result<Vec<SubTask>, EnvError> {
    let surviving: Vec<usize> = (0..action.partition.len())
        .filter(|&j| action.partition[j] >= cfg.partition_prune_eps)
        .collect();
    if surviving.is_empty() {
        return Err(EnvError::DegenerateAction);
    }
    let mass: f64 = surviving.iter().map(|&j| action.partition[j]).sum();
    Ok(surviving
        .into_iter()
        .map(|j| {
            let fraction = action.partition[j] / mass;
            SubTask {
                parent_task: task.id,
                server_index: j,
                fraction,
                data_bits: fraction * task.data_bits,
                cpu_cycles: fraction * task.cpu_cycles,
                freq_fraction: action.freq[j].max(cfg.freq_floor),
                tx_time_s: 0.0,
                enqueue_time_s: 0.0,
            }
        })
        .collect())
}
