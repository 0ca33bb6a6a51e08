//! The episode loop: one environment instance owns the ground truth, the
//! agent's knowledge and the observation pyramids, and advances them together.
//!
//! Step order: motion at the true pose, coverage from the true pose, lidar at
//! the true pose, pose perturbation, known-map update from the perceived pose,
//! frontier and pyramid updates, TV bookkeeping, reward, termination.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gridworld::{integrate_motion, perturb_pose, simulate_lidar, Action, LidarScan, NoiseModel, NoiseSource, Pose, ProfileKind, TaskProfile, WorldMap};
use crate::mapping::{apply_coverage, compute_frontier, reachable_mask, update_known_map, CoverageGrid, CoverageStats, FrontierGrid, Knowledge, KnownMap};
use crate::obs::{build_observation, EncoderConfig, Observation, ObservationShape, ObservationState, PooledPyramid, Reducer};
use crate::rewards::{check_termination, step_reward, DoneReason, EpisodeStatus, RewardBreakdown, RewardParams, StepSignals, TvTracker};
use crate::CoreError;

/// Everything that configures an episode apart from the map and start pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub profile: TaskProfile,
    pub encoder: EncoderConfig,
    pub rewards: RewardParams,
    /// Noise level 0-3.
    pub noise_level: u8,
    pub goal_coverage: f64,
    /// Stale-step truncation limit.
    pub tau: usize,
    /// Hard step limit, counted as truncation.
    pub max_steps: Option<usize>,
    /// When false the frontier channel is always zero.
    pub frontier_maps: bool,
    pub coverage_reducer: Reducer,
}

impl EnvConfig {
    pub fn for_profile(kind: ProfileKind) -> Self {
        Self {
            profile: TaskProfile::for_kind(kind),
            encoder: EncoderConfig::default(),
            rewards: RewardParams::for_profile(kind),
            noise_level: 0,
            goal_coverage: 0.99,
            tau: 1000,
            max_steps: None,
            frontier_maps: true,
            coverage_reducer: Reducer::Mean,
        }
    }

    pub fn observation_shape(&self) -> ObservationShape {
        ObservationShape::new(&self.encoder, self.profile.lidar_rays)
    }
}

/// What one step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub done: DoneReason,
    pub collided: bool,
    /// Distance actually traveled, meters.
    pub distance: f64,
    pub new_area: f64,
    pub covered_fraction: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone)]
pub struct CoverageEnv {
    config: EnvConfig,
    world: Arc<WorldMap>,
    noise: NoiseSource,
    pose: Pose,
    perceived: Pose,
    scan: LidarScan,
    known: KnownMap,
    coverage: CoverageGrid,
    frontier: FrontierGrid,
    stats: CoverageStats,
    tv: TvTracker,
    obs_state: ObservationState,
    status: EpisodeStatus,
    steps: usize,
    done: DoneReason,
}

impl CoverageEnv {
    /// Starts an episode on `world` at `start`. `seed` drives the perception noise.
    pub fn new(config: EnvConfig, world: Arc<WorldMap>, start: Pose, seed: u64) -> Result<Self, CoreError> {
        config.profile.validate()?;
        let spec = world.spec;
        if world.disk_collides(start.x, start.y, config.profile.agent_radius) {
            return Err(CoreError::StartBlocked { x: start.x, y: start.y });
        }
        let reachable = reachable_mask(&world, &start, config.profile.agent_radius)?;
        let noise = NoiseSource::new(NoiseModel::level(config.noise_level, seed)?);
        let mut status = EpisodeStatus::new(config.goal_coverage);
        status.tau = config.tau;
        let mut obs_state = ObservationState::new(spec, config.encoder);
        obs_state.coverage_reducer = config.coverage_reducer;
        let mut env = Self {
            noise,
            pose: start,
            perceived: start,
            scan: LidarScan { ranges: vec![config.profile.lidar_range; config.profile.lidar_rays] },
            known: KnownMap::new(spec),
            coverage: CoverageGrid::new(spec),
            frontier: FrontierGrid::new(spec),
            stats: CoverageStats::new(reachable, &spec),
            tv: TvTracker::new(&CoverageGrid::new(spec)),
            obs_state,
            status,
            steps: 0,
            done: DoneReason::Running,
            world,
            config,
        };
        env.initial_sense();
        Ok(env)
    }

    fn initial_sense(&mut self) {
        let profile = self.config.profile;
        let update = apply_coverage(&mut self.coverage, &self.pose, &profile, &self.world);
        self.stats.record_step(&update.newly_covered);
        self.stats.steps_since_new_coverage = 0;
        self.tv = TvTracker::new(&self.coverage);
        self.scan = simulate_lidar(&self.world, &self.pose, &profile, &mut self.noise);
        self.perceived = perturb_pose(&self.pose, &mut self.noise);
        update_known_map(&mut self.known, &self.scan, &self.perceived, &profile);
        self.frontier = compute_frontier(&self.coverage, &self.known);
        let spec = self.world.spec;
        let enc = self.config.encoder;
        self.obs_state.coverage = PooledPyramid::from_mask(spec, &enc, self.coverage.cells());
        let obstacles: Vec<bool> = self.known.cells().iter().map(|k| *k == Knowledge::Obstacle).collect();
        self.obs_state.obstacle = PooledPyramid::from_mask(spec, &enc, &obstacles);
        self.obs_state.frontier = PooledPyramid::from_mask(spec, &enc, self.frontier.cells());
    }

    /// Advances one control period. Stepping a finished episode is a no-op
    /// that repeats the final status with zero reward.
    pub fn step(&mut self, action: Action) -> StepOutcome {
        if self.done.is_done() {
            return StepOutcome {
                reward: RewardBreakdown::default(),
                done: self.done,
                collided: false,
                distance: 0.0,
                new_area: 0.0,
                covered_fraction: self.stats.covered_fraction(),
                pose: self.pose,
            };
        }
        let profile = self.config.profile;
        let motion = integrate_motion(&self.pose, action, &profile, &self.world);
        self.pose = motion.pose;

        let update = apply_coverage(&mut self.coverage, &self.pose, &profile, &self.world);
        self.stats.record_step(&update.newly_covered);
        let tv_prev = self.tv.meters(self.world.spec.resolution);
        self.tv.apply(&self.coverage, &update.newly_covered);
        let tv = self.tv.meters(self.world.spec.resolution);

        self.scan = simulate_lidar(&self.world, &self.pose, &profile, &mut self.noise);
        self.perceived = perturb_pose(&self.pose, &mut self.noise);
        let changes = update_known_map(&mut self.known, &self.scan, &self.perceived, &profile);

        let mut touched: Vec<usize> = update.newly_covered.clone();
        touched.extend(changes.iter().map(|c| c.index));
        let frontier_flips = self.frontier.update(&self.coverage, &self.known, &touched);
        let cov_flips: Vec<(usize, bool)> = update.newly_covered.iter().map(|&i| (i, true)).collect();
        self.obs_state.coverage.update(&cov_flips);
        let obstacle_flips: Vec<(usize, bool)> = changes.iter().filter(|c| c.to == Knowledge::Obstacle).map(|c| (c.index, true)).collect();
        self.obs_state.obstacle.update(&obstacle_flips);
        self.obs_state.frontier.update(&frontier_flips);

        let reward = step_reward(
            &StepSignals { new_area: update.area, tv, tv_prev, covered_area: self.coverage.covered_area(), collided: motion.collided },
            &self.config.rewards,
            &profile,
        );
        self.steps += 1;
        self.status.steps_since_new = self.stats.steps_since_new_coverage;
        let covered_fraction = self.stats.covered_fraction();
        let mut done = check_termination(&self.status, covered_fraction);
        if done == DoneReason::Running && self.config.max_steps.is_some_and(|m| self.steps >= m) {
            done = DoneReason::Truncated;
        }
        self.done = done;
        StepOutcome { reward, done, collided: motion.collided, distance: motion.distance, new_area: update.area, covered_fraction, pose: self.pose }
    }

    /// Observation at the perceived pose after the latest step.
    pub fn observation(&self) -> Observation {
        let mut obs = build_observation(&self.obs_state, &self.perceived, &self.scan, &self.config.profile);
        if !self.config.frontier_maps {
            for s in &mut obs.frontier.scales {
                s.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        obs
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn world(&self) -> &Arc<WorldMap> {
        &self.world
    }

    /// Ground-truth pose.
    pub fn pose(&self) -> Pose {
        self.pose
    }

    /// Pose as perceived by the agent.
    pub fn perceived_pose(&self) -> Pose {
        self.perceived
    }

    pub fn scan(&self) -> &LidarScan {
        &self.scan
    }

    pub fn known(&self) -> &KnownMap {
        &self.known
    }

    pub fn coverage(&self) -> &CoverageGrid {
        &self.coverage
    }

    pub fn frontier(&self) -> &FrontierGrid {
        &self.frontier
    }

    pub fn stats(&self) -> &CoverageStats {
        &self.stats
    }

    pub fn tv_meters(&self) -> f64 {
        self.tv.meters(self.world.spec.resolution)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn done(&self) -> DoneReason {
        self.done
    }

    /// Elapsed simulated time, seconds.
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.profile.dt
    }
}
