//! The training loop: environment stepping interleaved with SAC updates,
//! curriculum-driven episode resets, episode metrics and checkpoints.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use coverage_core::mapgen::{random_start_pose, CurriculumState, EpisodeResult, MapCatalog, MapId, MapTask};
use coverage_core::mapio::load_world;
use coverage_core::rng::{derive_seed, stream, Subsystem};
use coverage_core::{Action, CoverageEnv, DoneReason, Pose, WorldMap};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{SacAgent, UpdateStats};
use crate::config::{MapSource, TrainConfig};
use crate::replay::{ReplayBuffer, Transition};
use crate::SacError;

/// One row of the metrics CSV, written when an episode ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    /// Environment steps completed so far in the run.
    pub step: usize,
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub coverage: f64,
    pub level: u8,
    pub alpha: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub entropy: f64,
    pub length: usize,
    pub reached_goal: bool,
    pub map: String,
}

struct FixedMap {
    id: MapId,
    world: Arc<WorldMap>,
    starts: Vec<Pose>,
}

pub struct Trainer {
    config: TrainConfig,
    agent: SacAgent<f32>,
    buffer: ReplayBuffer,
    curriculum: Option<CurriculumState>,
    catalog: MapCatalog,
    fixed: Option<FixedMap>,
    env: CoverageEnv,
    map_id: MapId,
    obs: Vec<f32>,
    act_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    start_rng: ChaCha8Rng,
    step: usize,
    episode: usize,
    ep_return: f64,
    last: UpdateStats,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, SacError> {
        config.validate()?;
        let spec = config.actor_spec();
        let agent = SacAgent::new(spec, config.sac, derive_seed(config.seed, 1))?;
        let buffer = ReplayBuffer::new(config.sac.buffer_capacity, spec.map_len(), spec.lidar_rays);
        let (curriculum, fixed) = match &config.maps {
            MapSource::Curriculum => (Some(CurriculumState::new(MapTask::from(config.profile))), None),
            MapSource::EmptySquare { side } => {
                let world = Arc::new(WorldMap::empty_square(*side, config.encoder.fine_resolution));
                (None, Some(FixedMap { id: MapId::External(format!("empty-{side}")), world, starts: Vec::new() }))
            }
            MapSource::File { path } => {
                let (world, sidecar) = load_world(path)?;
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (None, Some(FixedMap { id: MapId::External(name), world: Arc::new(world), starts: sidecar.starts() }))
            }
        };
        let seed = config.seed;
        let mut start_rng = stream(seed, Subsystem::Episode);
        let mut catalog = MapCatalog::new();
        let (env, map_id) = Self::reset_env(&config, &mut catalog, curriculum.as_ref(), fixed.as_ref(), &mut start_rng, 0)?;
        let obs = env.observation().to_flat();
        Ok(Self {
            agent,
            buffer,
            curriculum,
            catalog,
            fixed,
            env,
            map_id,
            obs,
            act_rng: stream(seed, Subsystem::Policy),
            sample_rng: stream(seed, Subsystem::Training),
            start_rng,
            step: 0,
            episode: 0,
            ep_return: 0.0,
            last: UpdateStats { alpha: config.sac.init_log_alpha.exp(), ..Default::default() },
            config,
        })
    }

    fn reset_env(
        config: &TrainConfig,
        catalog: &mut MapCatalog,
        curriculum: Option<&CurriculumState>,
        fixed: Option<&FixedMap>,
        start_rng: &mut ChaCha8Rng,
        episode: usize,
    ) -> Result<(CoverageEnv, MapId), SacError> {
        let episode_seed = derive_seed(config.seed, 1000 + episode as u64);
        let profile = config.env_config(config.goal_coverage).profile;
        let (id, world, start, goal) = match (curriculum, fixed) {
            (Some(state), _) => {
                let m = catalog.select_episode_map(state, &profile, episode_seed);
                (m.id, m.world, m.start, state.current().goal_coverage)
            }
            (None, Some(f)) => {
                let start = if f.starts.is_empty() {
                    random_start_pose(&f.world, profile.agent_radius, start_rng)
                } else {
                    f.starts[start_rng.random_range(0..f.starts.len())]
                };
                (f.id.clone(), f.world.clone(), start, config.goal_coverage)
            }
            (None, None) => unreachable!("a map source is always configured"),
        };
        let env = CoverageEnv::new(config.env_config(goal), world, start, episode_seed)?;
        Ok((env, id))
    }

    pub fn agent(&self) -> &SacAgent<f32> {
        &self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn episodes(&self) -> usize {
        self.episode
    }

    pub fn level(&self) -> u8 {
        self.curriculum.as_ref().map_or(0, |c| c.level)
    }

    /// One environment step followed by the configured number of updates.
    /// Returns the summary if the step ended an episode.
    pub fn step(&mut self) -> Result<Option<EpisodeSummary>, SacError> {
        let sac = self.config.sac;
        let a = if self.step < sac.warmup_steps {
            [self.act_rng.random_range(-1.0..1.0), self.act_rng.random_range(-1.0..1.0)]
        } else {
            self.agent.act(&self.obs, Some(&mut self.act_rng))?
        };
        let out = self.env.step(Action::new(a[0], a[1]));
        let next_obs = self.env.observation().to_flat();
        self.buffer.push(&Transition {
            obs: std::mem::take(&mut self.obs),
            action: [a[0] as f32, a[1] as f32],
            reward: out.reward.total as f32,
            next_obs: next_obs.clone(),
            done: out.done == DoneReason::Goal,
        });
        self.obs = next_obs;
        self.ep_return += out.reward.total;
        self.step += 1;
        if self.step > sac.warmup_steps && self.buffer.len() >= sac.batch_size {
            for _ in 0..sac.updates_per_step {
                let batch = self.buffer.sample(sac.batch_size, &mut self.sample_rng);
                self.last = self.agent.update(&batch)?;
            }
        }
        if !out.done.is_done() {
            return Ok(None);
        }
        let reached_goal = out.done == DoneReason::Goal;
        let summary = EpisodeSummary {
            step: self.step,
            episode: self.episode,
            episode_return: self.ep_return,
            coverage: out.covered_fraction,
            level: self.level(),
            alpha: self.agent.alpha(),
            critic_loss: self.last.critic_loss,
            actor_loss: self.last.actor_loss,
            entropy: self.last.entropy,
            length: self.env.steps(),
            reached_goal,
            map: self.map_id.to_string(),
        };
        if let Some(c) = self.curriculum.as_mut() {
            c.step(&EpisodeResult { map: self.map_id.clone(), reached_goal });
        }
        self.episode += 1;
        self.ep_return = 0.0;
        let (env, id) = Self::reset_env(&self.config, &mut self.catalog, self.curriculum.as_ref(), self.fixed.as_ref(), &mut self.start_rng, self.episode)?;
        self.env = env;
        self.map_id = id;
        self.obs = self.env.observation().to_flat();
        Ok(Some(summary))
    }

    /// Runs `steps` environment steps, appending episode rows to `metrics`
    /// and writing checkpoints into `checkpoint_dir` every
    /// `checkpoint_every` steps and at the end.
    pub fn run<W: Write>(&mut self, steps: usize, mut metrics: Option<&mut csv::Writer<W>>, checkpoint_dir: Option<&Path>) -> Result<Vec<EpisodeSummary>, SacError> {
        let mut episodes = Vec::new();
        for _ in 0..steps {
            if let Some(s) = self.step()? {
                if let Some(w) = metrics.as_deref_mut() {
                    w.serialize(&s)?;
                    w.flush()?;
                }
                log::info!("step {} episode {} return {:.2} coverage {:.3} level {}", s.step, s.episode, s.episode_return, s.coverage, s.level);
                episodes.push(s);
            }
            if let (Some(dir), Some(every)) = (checkpoint_dir, self.config.checkpoint_every) {
                if every > 0 && self.step % every == 0 {
                    self.save_checkpoint(&dir.join(format!("step-{:09}.ckpt", self.step)))?;
                }
            }
        }
        if let Some(dir) = checkpoint_dir {
            self.save_checkpoint(&dir.join("final.ckpt"))?;
        }
        Ok(episodes)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), SacError> {
        let mut ck = self.agent.to_checkpoint(self.step as u64);
        ck.meta["train"] = serde_json::to_value(&self.config)?;
        ck.meta["level"] = self.level().into();
        ck.save(path)?;
        Ok(())
    }
}

/// Full run from a config: metrics CSV at `metrics_path`, checkpoints in `checkpoint_dir`.
pub fn train(config: TrainConfig, metrics_path: &Path, checkpoint_dir: &Path) -> Result<Vec<EpisodeSummary>, SacError> {
    std::fs::create_dir_all(checkpoint_dir)?;
    let steps = config.total_steps;
    let mut trainer = Trainer::new(config)?;
    let mut w = csv::Writer::from_path(metrics_path)?;
    trainer.run(steps, Some(&mut w), Some(checkpoint_dir))
}

/// Checkpoint path convention used by [`train`].
pub fn final_checkpoint(checkpoint_dir: &Path) -> PathBuf {
    checkpoint_dir.join("final.ckpt")
}
