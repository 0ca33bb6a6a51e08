//! Coverage times and collision rates derived from an episode log.

use coverage_core::EpisodeLog;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Seconds until 90% coverage, absent if never reached.
    pub t90: Option<f64>,
    /// Seconds until 99% coverage, absent if never reached.
    pub t99: Option<f64>,
    pub collisions: usize,
    /// Simulated episode duration, seconds.
    pub duration: f64,
    /// Distance traveled, meters.
    pub distance: f64,
    pub collisions_per_100s: f64,
    pub collisions_per_100m: f64,
    pub final_coverage: f64,
}

/// First time the coverage fraction reaches `level`, interpolated linearly
/// between the two bracketing records.
pub fn time_to_coverage(log: &EpisodeLog, level: f64) -> Option<f64> {
    let k = log.records.iter().position(|r| r.coverage_fraction >= level)?;
    let hit = &log.records[k];
    if k == 0 {
        return Some(hit.t);
    }
    let prev = &log.records[k - 1];
    let gain = hit.coverage_fraction - prev.coverage_fraction;
    let frac = if gain > 0.0 { ((level - prev.coverage_fraction) / gain).clamp(0.0, 1.0) } else { 1.0 };
    Some(prev.t + frac * (hit.t - prev.t))
}

fn per_100(count: usize, amount: f64) -> f64 {
    if amount > 0.0 {
        100.0 * count as f64 / amount
    } else {
        0.0
    }
}

pub fn compute_metrics(log: &EpisodeLog) -> Metrics {
    let collisions = log.records.iter().filter(|r| r.collided != 0).count();
    let duration = log.records.last().map_or(0.0, |r| r.t);
    let distance = log.records.iter().map(|r| r.distance).sum();
    Metrics {
        t90: time_to_coverage(log, 0.9),
        t99: time_to_coverage(log, 0.99),
        collisions,
        duration,
        distance,
        collisions_per_100s: per_100(collisions, duration),
        collisions_per_100m: per_100(collisions, distance),
        final_coverage: log.final_coverage(),
    }
}
