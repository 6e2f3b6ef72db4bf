//! Per-episode metric rows and their CSV encoding.
//!
//! Column order is part of the output contract:
//! `episode,total_reward,completed_tasks,completion_ratio,energy_total_j,
//! energy_per_task_j,avg_time_cost_s,steps_survived`.

use super::HarnessError;
use crate::agents::EpisodeStats;
use std::io::{BufRead, Write};

pub const CSV_HEADER: &str = "episode,total_reward,completed_tasks,completion_ratio,energy_total_j,energy_per_task_j,avg_time_cost_s,steps_survived";

/// One CSV row. Count-like fields are f64 so that means over runs stay
/// representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub total_reward: f64,
    pub completed_tasks: f64,
    pub completion_ratio: f64,
    pub energy_total_j: f64,
    pub energy_per_task_j: f64,
    pub avg_time_cost_s: f64,
    pub steps_survived: f64,
}

/// Derive the metric row from raw episode accumulators. One task is
/// dispatched per step, so ratios are taken over dispatched tasks.
pub fn episode_metrics(stats: &EpisodeStats) -> EpisodeMetrics {
    let dispatched = stats.dispatched() as f64;
    let steps = stats.steps as f64;
    EpisodeMetrics {
        episode: stats.episode,
        total_reward: stats.total_reward,
        completed_tasks: stats.completed_tasks as f64,
        completion_ratio: stats.completed_tasks as f64 / dispatched,
        energy_total_j: stats.energy_total_j,
        energy_per_task_j: stats.energy_total_j / dispatched,
        avg_time_cost_s: stats.time_cost_sum_s / steps,
        steps_survived: steps,
    }
}

/// Element-wise mean of aligned per-run series (same episode count in every
/// run; the episode column must agree).
pub fn mean_series(runs: &[Vec<EpisodeMetrics>]) -> Vec<EpisodeMetrics> {
    assert!(!runs.is_empty());
    let episodes = runs[0].len();
    assert!(runs.iter().all(|r| r.len() == episodes));
    let n = runs.len() as f64;
    (0..episodes)
        .map(|e| {
            debug_assert!(runs.iter().all(|r| r[e].episode == runs[0][e].episode));
            let sum = |f: fn(&EpisodeMetrics) -> f64| runs.iter().map(|r| f(&r[e])).sum::<f64>() / n;
            EpisodeMetrics {
                episode: runs[0][e].episode,
                total_reward: sum(|m| m.total_reward),
                completed_tasks: sum(|m| m.completed_tasks),
                completion_ratio: sum(|m| m.completion_ratio),
                energy_total_j: sum(|m| m.energy_total_j),
                energy_per_task_j: sum(|m| m.energy_per_task_j),
                avg_time_cost_s: sum(|m| m.avg_time_cost_s),
                steps_survived: sum(|m| m.steps_survived),
            }
        })
        .collect()
}

pub fn write_metrics<W: Write>(w: &mut W, rows: &[EpisodeMetrics]) -> Result<(), HarnessError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(CSV_HEADER.split(','))?;
    for m in rows {
        csv.write_record([
            m.episode.to_string(),
            format!("{:.16e}", m.total_reward),
            format!("{:.16e}", m.completed_tasks),
            format!("{:.16e}", m.completion_ratio),
            format!("{:.16e}", m.energy_total_j),
            format!("{:.16e}", m.energy_per_task_j),
            format!("{:.16e}", m.avg_time_cost_s),
            format!("{:.16e}", m.steps_survived),
        ])?;
    }
    csv.flush().map_err(HarnessError::Io)?;
    Ok(())
}

pub fn read_metrics<R: BufRead>(r: R) -> Result<Vec<EpisodeMetrics>, HarnessError> {
    let mut csv = csv::Reader::from_reader(r);
    {
        let headers = csv.headers()?;
        let expected: Vec<&str> = CSV_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(HarnessError::Format(format!(
                "unexpected CSV header: {headers:?}"
            )));
        }
    }
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record?;
        let field = |i: usize| -> Result<f64, HarnessError> {
            record[i]
                .parse()
                .map_err(|e| HarnessError::Format(format!("bad float in column {i}: {e}")))
        };
        rows.push(EpisodeMetrics {
            episode: record[0]
                .parse()
                .map_err(|e| HarnessError::Format(format!("bad episode index: {e}")))?,
            total_reward: field(1)?,
            completed_tasks: field(2)?,
            completion_ratio: field(3)?,
            energy_total_j: field(4)?,
            energy_per_task_j: field(5)?,
            avg_time_cost_s: field(6)?,
            steps_survived: field(7)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> EpisodeStats {
        EpisodeStats {
            episode: 3,
            total_reward: 12.5,
            completed_tasks: 8,
            expired_tasks: 2,
            energy_total_j: 4.0,
            time_cost_sum_s: 5.0,
            steps: 10,
        }
    }

    #[test]
    fn metrics_derivation() {
        let m = episode_metrics(&stats());
        assert_eq!(m.episode, 3);
        assert_eq!(m.completion_ratio, 0.8);
        assert_eq!(m.energy_per_task_j, 0.4);
        assert_eq!(m.avg_time_cost_s, 0.5);
        assert_eq!(m.steps_survived, 10.0);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows: Vec<EpisodeMetrics> = (0..5)
            .map(|e| {
                let mut s = stats();
                s.episode = e;
                s.total_reward = 1.0 / (e as f64 + 3.0);
                episode_metrics(&s)
            })
            .collect();
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows).unwrap();
        let back = read_metrics(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(rows.len(), back.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.episode, b.episode);
            assert_eq!(a.total_reward.to_bits(), b.total_reward.to_bits());
            assert_eq!(a.energy_per_task_j.to_bits(), b.energy_per_task_j.to_bits());
        }
    }

    #[test]
    fn mean_series_averages_elementwise() {
        let mut a = episode_metrics(&stats());
        let mut b = a;
        a.total_reward = 1.0;
        b.total_reward = 3.0;
        let mean = mean_series(&[vec![a], vec![b]]);
        assert_eq!(mean[0].total_reward, 2.0);
        assert_eq!(mean[0].steps_survived, 10.0);
    }

    #[test]
    fn read_rejects_wrong_header() {
        let bad = b"episode,reward\n1,2\n";
        assert!(read_metrics(std::io::Cursor::new(bad.as_slice())).is_err());
    }
}
