//! Per-step episode logs and their CSV form.
//!
//! The file starts with one `# ` line holding the JSON header, followed by a
//! regular CSV table with one row per step. Step 0 is the state after the
//! initial sensing, before any action.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::{CoverageEnv, StepOutcome};
use crate::gridworld::{Action, Pose};
use crate::rewards::RewardBreakdown;
use crate::CoreError;

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub schema: u32,
    pub map_id: String,
    pub seed: u64,
    pub profile: String,
    pub policy: String,
    pub noise_level: u8,
    pub dt: f64,
    /// Reachable free area the coverage fraction refers to, m².
    pub reachable_area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_norm: f64,
    pub omega_norm: f64,
    pub coverage_fraction: f64,
    pub r_area: f64,
    pub r_tv_global: f64,
    pub r_tv_incremental: f64,
    pub r_collision: f64,
    pub r_constant: f64,
    pub r_total: f64,
    pub collided: u8,
    pub distance: f64,
}

impl StepRecord {
    pub fn pose(&self) -> Pose {
        Pose { x: self.x, y: self.y, theta: self.theta }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    /// Starts a log whose step-0 record is the environment's current state.
    pub fn start(env: &CoverageEnv, map_id: &str, seed: u64, policy: &str) -> Self {
        let cfg = env.config();
        let header = EpisodeHeader {
            schema: LOG_SCHEMA_VERSION,
            map_id: map_id.to_string(),
            seed,
            profile: cfg.profile.kind.name().to_string(),
            policy: policy.to_string(),
            noise_level: cfg.noise_level,
            dt: cfg.profile.dt,
            reachable_area: env.stats().reachable_free_area,
        };
        let p = env.pose();
        let first = StepRecord {
            step: env.steps(),
            t: env.time(),
            x: p.x,
            y: p.y,
            theta: p.theta,
            v_norm: 0.0,
            omega_norm: 0.0,
            coverage_fraction: env.stats().covered_fraction(),
            r_area: 0.0,
            r_tv_global: 0.0,
            r_tv_incremental: 0.0,
            r_collision: 0.0,
            r_constant: 0.0,
            r_total: 0.0,
            collided: 0,
            distance: 0.0,
        };
        Self { header, records: vec![first] }
    }

    pub fn push(&mut self, action: Action, outcome: &StepOutcome) {
        let step = self.records.last().map_or(0, |r| r.step + 1);
        let RewardBreakdown { area, tv_global, tv_incremental, collision, constant, total } = outcome.reward;
        let action = Action::new(action.v_norm, action.omega_norm);
        self.records.push(StepRecord {
            step,
            t: step as f64 * self.header.dt,
            x: outcome.pose.x,
            y: outcome.pose.y,
            theta: outcome.pose.theta,
            v_norm: action.v_norm,
            omega_norm: action.omega_norm,
            coverage_fraction: outcome.covered_fraction,
            r_area: area,
            r_tv_global: tv_global,
            r_tv_incremental: tv_incremental,
            r_collision: collision,
            r_constant: constant,
            r_total: total,
            collided: outcome.collided as u8,
            distance: outcome.distance,
        });
    }

    pub fn total_return(&self) -> f64 {
        self.records.iter().map(|r| r.r_total).sum()
    }

    pub fn final_coverage(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.coverage_fraction)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), CoreError> {
        writeln!(out, "# {}", serde_json::to_string(&self.header)?)?;
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, CoreError> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let json = first.strip_prefix("# ").ok_or_else(|| CoreError::LogFormat("missing header line".into()))?;
        let header: EpisodeHeader = serde_json::from_str(json.trim_end())?;
        if header.schema != LOG_SCHEMA_VERSION {
            return Err(CoreError::LogFormat(format!("unsupported schema {}", header.schema)));
        }
        let mut r = csv::Reader::from_reader(reader);
        let records = r.deserialize().collect::<Result<Vec<StepRecord>, _>>()?;
        Ok(Self { header, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::gridworld::{ProfileKind, WorldMap};
    use std::sync::Arc;

    fn sample_log() -> EpisodeLog {
        let world = Arc::new(WorldMap::empty_square(3.0, 0.0375));
        let mut env = CoverageEnv::new(EnvConfig::for_profile(ProfileKind::Mow), world, Pose::new(1.5, 1.5, 0.1), 4).unwrap();
        let mut log = EpisodeLog::start(&env, "empty-3", 4, "scripted");
        for k in 0..30 {
            let a = Action::new(1.0, if k % 10 < 5 { 0.3 } else { -0.7 });
            let out = env.step(a);
            log.push(a, &out);
        }
        log
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let log = sample_log();
        let text = log.to_csv_string();
        let back = EpisodeLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn time_and_monotone_coverage() {
        let log = sample_log();
        for (k, r) in log.records.iter().enumerate() {
            assert_eq!(r.step, k);
            assert_eq!(r.t, k as f64 * 0.5);
        }
        assert!(log.records.windows(2).all(|w| w[1].coverage_fraction >= w[0].coverage_fraction));
    }

    #[test]
    fn rejects_missing_header() {
        assert!(EpisodeLog::read_csv("step,t\n".as_bytes()).is_err());
    }
}
