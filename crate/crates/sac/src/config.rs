//! Training configuration, loadable from JSON. Missing fields take defaults.

use std::path::{Path, PathBuf};

use coverage_core::obs::EncoderConfig;
use coverage_core::{EnvConfig, ProfileKind, RewardParams};
use coverage_nn::{Arch, ArchitectureSpec, HeadKind};
use serde::{Deserialize, Serialize};

use crate::SacError;

/// Soft actor-critic hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    /// Adam learning rate shared by actor, critics and temperature.
    pub lr: f64,
    pub batch_size: usize,
    pub gamma: f64,
    /// Target network averaging rate.
    pub polyak: f64,
    /// Desired policy entropy, usually minus the action dimension.
    pub target_entropy: f64,
    /// Gradient updates per environment step.
    pub updates_per_step: usize,
    /// Uniform random actions before the actor takes over; no updates either.
    pub warmup_steps: usize,
    pub buffer_capacity: usize,
    /// Global gradient norm limit per network; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Initial temperature as `ln α`.
    pub init_log_alpha: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            batch_size: 256,
            gamma: 0.99,
            polyak: 0.005,
            target_entropy: -2.0,
            updates_per_step: 1,
            warmup_steps: 10_000,
            buffer_capacity: 500_000,
            grad_clip: None,
            init_log_alpha: 0.0,
        }
    }
}

/// Layer widths; input sizes follow from the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub arch: Arch,
    pub conv_channels: usize,
    pub map_features: usize,
    pub hidden: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { arch: Arch::Sgcnn, conv_channels: 24, map_features: 256, hidden: 256 }
    }
}

impl NetworkConfig {
    pub fn spec(&self, env: &EnvConfig, head: HeadKind) -> ArchitectureSpec {
        ArchitectureSpec {
            arch: self.arch,
            head,
            scales: env.encoder.scales,
            grid_size: env.encoder.grid_size,
            lidar_rays: env.profile.lidar_rays,
            action_dim: 2,
            conv_channels: self.conv_channels,
            map_features: self.map_features,
            hidden: self.hidden,
        }
    }
}

/// Where episode maps come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MapSource {
    /// Progressive curriculum over fixed tiers and random maps.
    Curriculum,
    /// One empty square room of the given side, meters.
    EmptySquare { side: f64 },
    /// One map image with its JSON sidecar.
    File { path: PathBuf },
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub profile: ProfileKind,
    pub seed: u64,
    pub total_steps: usize,
    pub sac: SacConfig,
    pub network: NetworkConfig,
    pub encoder: EncoderConfig,
    pub noise_level: u8,
    pub maps: MapSource,
    /// Goal coverage for non-curriculum maps.
    pub goal_coverage: f64,
    /// Stale-step truncation limit.
    pub tau: usize,
    /// Hard episode length limit (truncation).
    pub max_episode_steps: Option<usize>,
    /// Steps between checkpoints; `None` writes only the final one.
    pub checkpoint_every: Option<usize>,
    /// Reward weights; `None` uses the profile defaults.
    pub rewards: Option<RewardParams>,
    /// When false the frontier channel is zeroed (ablation).
    pub frontier_maps: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            profile: ProfileKind::Mow,
            seed: 0,
            total_steps: 8_000_000,
            sac: SacConfig::default(),
            network: NetworkConfig::default(),
            encoder: EncoderConfig::default(),
            noise_level: 1,
            maps: MapSource::Curriculum,
            goal_coverage: 0.99,
            tau: 1000,
            max_episode_steps: None,
            checkpoint_every: Some(100_000),
            rewards: None,
            frontier_maps: true,
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self, SacError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Environment settings for an episode with the given goal coverage.
    pub fn env_config(&self, goal_coverage: f64) -> EnvConfig {
        let mut env = EnvConfig::for_profile(self.profile);
        env.encoder = self.encoder;
        env.noise_level = self.noise_level;
        env.goal_coverage = goal_coverage;
        env.tau = self.tau;
        env.max_steps = self.max_episode_steps;
        env.frontier_maps = self.frontier_maps;
        if let Some(r) = self.rewards {
            env.rewards = r;
        }
        env
    }

    pub fn actor_spec(&self) -> ArchitectureSpec {
        self.network.spec(&self.env_config(self.goal_coverage), HeadKind::Actor)
    }

    pub fn validate(&self) -> Result<(), SacError> {
        let s = &self.sac;
        let bad = |m: &str| Err(SacError::Config(m.to_string()));
        if !(s.lr > 0.0 && s.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if s.batch_size == 0 || s.buffer_capacity < s.batch_size {
            return bad("batch size must be positive and fit in the buffer");
        }
        if !(0.0..=1.0).contains(&s.gamma) || !(0.0..=1.0).contains(&s.polyak) {
            return bad("gamma and polyak must lie in [0, 1]");
        }
        if s.updates_per_step == 0 {
            return bad("updates_per_step must be at least 1");
        }
        if self.noise_level > 3 {
            return bad("noise level must be 0-3");
        }
        self.actor_spec().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_json() {
        let c: TrainConfig = serde_json::from_str(r#"{"seed": 3, "sac": {"batch_size": 32}, "maps": {"kind": "empty-square", "side": 2.4}}"#).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.sac.batch_size, 32);
        assert_eq!(c.sac.lr, 1e-5);
        assert_eq!(c.sac.buffer_capacity, 500_000);
        assert_eq!(c.maps, MapSource::EmptySquare { side: 2.4 });
        c.validate().unwrap();
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn standard_actor_shape() {
        let spec = TrainConfig::default().actor_spec();
        assert_eq!(spec.obs_len(), 12 * 32 * 32 + 24);
    }
}
