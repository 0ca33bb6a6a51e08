//! Drives the simulated agent through a list of waypoints: turn in place
//! toward the next point at up to ω_max, then drive straight at up to v_max.
//! Every step goes through the environment, so baselines share the clock,
//! coverage model and collision handling of learned agents.

use coverage_core::gridworld::normalize_angle;
use coverage_core::{Action, CoverageEnv, EpisodeLog, NoiseModel};

/// Outcome of one leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    Reached,
    /// The step budget ran out or the agent kept colliding.
    Blocked,
    /// The episode ended (goal, truncation or step limit).
    EpisodeOver,
}

#[derive(Debug)]
pub struct Executor<'a> {
    pub env: &'a mut CoverageEnv,
    pub log: &'a mut EpisodeLog,
    /// Distance at which a waypoint counts as reached.
    pub position_tolerance: f64,
    /// Heading error below which the agent drives instead of turning.
    pub heading_tolerance: f64,
    /// Hard cap on executed steps, on top of the environment's own limits.
    pub max_steps: Option<usize>,
    /// Total distance of the commanded legs, meters.
    pub commanded_length: f64,
}

const COLLISION_PATIENCE: usize = 3;

impl<'a> Executor<'a> {
    pub fn new(env: &'a mut CoverageEnv, log: &'a mut EpisodeLog, max_steps: Option<usize>) -> Self {
        let noise = NoiseModel::level(env.config().noise_level, 0).unwrap_or_default();
        Self {
            position_tolerance: (3.0 * noise.sigma_pos).max(0.01),
            heading_tolerance: (3.0 * noise.sigma_heading).max(0.02),
            env,
            log,
            max_steps,
            commanded_length: 0.0,
        }
    }

    pub fn is_over(&self) -> bool {
        self.env.done().is_done() || self.max_steps.is_some_and(|m| self.env.steps() >= m)
    }

    fn act(&mut self, action: Action) -> bool {
        let outcome = self.env.step(action);
        self.log.push(action, &outcome);
        outcome.collided
    }

    /// Turns in place until the heading is within tolerance of `heading`.
    pub fn face(&mut self, heading: f64) -> Leg {
        let profile = self.env.config().profile;
        let budget = (std::f64::consts::PI / (profile.omega_max * profile.dt)).ceil() as usize + 3;
        for _ in 0..budget {
            if self.is_over() {
                return Leg::EpisodeOver;
            }
            let e = normalize_angle(heading - self.env.perceived_pose().theta);
            if e.abs() <= self.heading_tolerance {
                return Leg::Reached;
            }
            self.act(Action::new(0.0, e / (profile.omega_max * profile.dt)));
        }
        Leg::Blocked
    }

    /// Drives to `(x, y)`.
    pub fn go_to(&mut self, x: f64, y: f64) -> Leg {
        let profile = self.env.config().profile;
        let start = self.env.perceived_pose();
        let dist0 = (x - start.x).hypot(y - start.y);
        self.commanded_length += dist0;
        let budget = (dist0 / (profile.v_max * profile.dt)).ceil() as usize + 2 * (std::f64::consts::PI / (profile.omega_max * profile.dt)).ceil() as usize + 10;
        let mut bumps = 0;
        for _ in 0..budget {
            if self.is_over() {
                return Leg::EpisodeOver;
            }
            let p = self.env.perceived_pose();
            let (dx, dy) = (x - p.x, y - p.y);
            let dist = dx.hypot(dy);
            if dist <= self.position_tolerance {
                return Leg::Reached;
            }
            let e = normalize_angle(dy.atan2(dx) - p.theta);
            let turn = e / (profile.omega_max * profile.dt);
            let collided = if e.abs() > self.heading_tolerance {
                self.act(Action::new(0.0, turn))
            } else {
                self.act(Action::new(dist / (profile.v_max * profile.dt), turn))
            };
            bumps = if collided { bumps + 1 } else { 0 };
            if bumps >= COLLISION_PATIENCE {
                return Leg::Blocked;
            }
        }
        Leg::Blocked
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use coverage_core::gridworld::FINE_RESOLUTION;
    use coverage_core::{EnvConfig, Pose, ProfileKind, WorldMap};
    use std::sync::Arc;

    fn env() -> CoverageEnv {
        let world = Arc::new(WorldMap::empty_square(2.4, FINE_RESOLUTION));
        CoverageEnv::new(EnvConfig::for_profile(ProfileKind::Mow), world, Pose::new(0.5, 0.5, 0.0), 1).unwrap()
    }

    #[test]
    fn turns_then_drives_to_the_waypoint() {
        let mut env = env();
        let mut log = EpisodeLog::start(&env, "t", 1, "test");
        let mut ex = Executor::new(&mut env, &mut log, None);
        assert_eq!(ex.go_to(0.5, 1.8), Leg::Reached);
        let p = env.pose();
        assert!((p.x - 0.5).abs() < 0.011 && (p.y - 1.8).abs() < 0.011);
        // the first steps only turn: a quarter turn takes ceil((π/2)/0.5) = 4 steps
        let turning: Vec<_> = log.records[1..].iter().take_while(|r| r.v_norm == 0.0).collect();
        assert_eq!(turning.len(), 4);
        // 1.3 m at 0.13 m per step
        assert_eq!(log.records.len() - 1 - turning.len(), 10);
        assert!(log.records.iter().all(|r| r.collided == 0));
    }

    #[test]
    fn a_wall_blocks_the_leg() {
        let mut env = env();
        let mut log = EpisodeLog::start(&env, "t", 1, "test");
        let mut ex = Executor::new(&mut env, &mut log, None);
        assert_eq!(ex.go_to(3.5, 0.5), Leg::Blocked);
        assert!(log.records.iter().any(|r| r.collided == 1));
    }
}
