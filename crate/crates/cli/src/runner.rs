//! Runs one episode of a learned, classical or random policy.

use std::path::Path;

use coverage_baselines::{run_planner, PlannerKind};
use coverage_core::rng::{stream, Subsystem};
use coverage_core::{Action, CoverageEnv, EnvConfig, EpisodeLog, Observation};
use coverage_nn::{mean_action, Checkpoint, HeadKind, Network};
use coverage_sac::TrainConfig;
use rand::Rng;

use crate::maps::MapInstance;
use crate::CliError;

/// A trained actor evaluated deterministically through `tanh(mean)`.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    pub actor: Network<f32>,
    /// Training configuration stored with the checkpoint, if any.
    pub train: Option<TrainConfig>,
    pub name: String,
}

impl ActorPolicy {
    pub fn from_checkpoint(ck: &Checkpoint, name: &str) -> Result<Self, CliError> {
        let actor: Network<f32> = ck.network("actor")?;
        if actor.spec.head != HeadKind::Actor {
            return Err(CliError::Incompatible("the actor block does not hold an actor network".into()));
        }
        let train = ck.meta.get("train").map(|v| serde_json::from_value(v.clone())).transpose()?;
        Ok(Self { actor, train, name: name.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_checkpoint(&Checkpoint::load(path)?, &name)
    }

    /// Errors unless observations of `env` fit the network input.
    pub fn check(&self, env: &EnvConfig) -> Result<(), CliError> {
        let spec = self.actor.spec;
        let shape = env.observation_shape();
        let mismatch = |what: &str, net: usize, env: usize| Err(CliError::Incompatible(format!("network expects {net} {what}, environment provides {env}")));
        if spec.scales != shape.scales {
            return mismatch("scales", spec.scales, shape.scales);
        }
        if spec.grid_size != shape.grid_size {
            return mismatch("grid cells per side", spec.grid_size, shape.grid_size);
        }
        if spec.lidar_rays != shape.lidar {
            return mismatch("lidar rays", spec.lidar_rays, shape.lidar);
        }
        if spec.obs_len() != shape.len {
            return mismatch("observation values", spec.obs_len(), shape.len);
        }
        if spec.action_dim != 2 {
            return mismatch("action dimensions", spec.action_dim, 2);
        }
        Ok(())
    }

    pub fn act(&self, obs: &Observation) -> Result<Action, CliError> {
        let head = self.actor.predict(&obs.to_flat(), None, 1)?;
        let a = mean_action(&head, 1, 2);
        Ok(Action::new(a[0] as f64, a[1] as f64))
    }
}

#[derive(Debug, Clone)]
pub enum Policy {
    Actor(Box<ActorPolicy>),
    Baseline(PlannerKind),
    /// Uniform random actions.
    Random,
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Self::Actor(a) => format!("sac:{}", a.name),
            Self::Baseline(k) => k.name().to_string(),
            Self::Random => "random".to_string(),
        }
    }
}

/// Steps `policy` on `map` from its start pose until the goal, truncation or
/// `max_steps`. The same inputs always produce the same log.
pub fn run_episode(policy: &Policy, map: &MapInstance, config: &EnvConfig, seed: u64, max_steps: Option<usize>) -> Result<EpisodeLog, CliError> {
    if let Policy::Actor(actor) = policy {
        actor.check(config)?;
    }
    let mut env = CoverageEnv::new(config.clone(), map.world.clone(), map.start, seed)?;
    let limit = max_steps.unwrap_or(usize::MAX);
    match policy {
        Policy::Baseline(kind) => Ok(run_planner(*kind, &mut env, &map.id, seed, max_steps)?.log),
        Policy::Actor(actor) => {
            let mut log = EpisodeLog::start(&env, &map.id, seed, &policy.name());
            while !env.done().is_done() && env.steps() < limit {
                let a = actor.act(&env.observation())?;
                let out = env.step(a);
                log.push(a, &out);
            }
            Ok(log)
        }
        Policy::Random => {
            let mut rng = stream(seed, Subsystem::Policy);
            let mut log = EpisodeLog::start(&env, &map.id, seed, &policy.name());
            while !env.done().is_done() && env.steps() < limit {
                let a = Action::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
                let out = env.step(a);
                log.push(a, &out);
            }
            Ok(log)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{load_map, MapArg};
    use coverage_core::ProfileKind;

    #[test]
    fn random_policy_is_reproducible_and_monotone() {
        let map = load_map(&MapArg::Empty(1.2), ProfileKind::Mow, 3).unwrap();
        let cfg = EnvConfig::for_profile(ProfileKind::Mow);
        let a = run_episode(&Policy::Random, &map, &cfg, 3, Some(200)).unwrap();
        let b = run_episode(&Policy::Random, &map, &cfg, 3, Some(200)).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_eq!(a.records.len(), 201);
        assert!(a.records.windows(2).all(|w| w[1].coverage_fraction >= w[0].coverage_fraction));
        let c = run_episode(&Policy::Random, &map, &cfg, 4, Some(200)).unwrap();
        assert_ne!(a, c);
    }
}
