//! Soft actor-critic learner: losses, their gradients and the update steps.
//!
//! Loss functions take the reparameterization noise explicitly so they are
//! deterministic and can be checked against finite differences.

use coverage_nn::{clip_grad_norm, mean_action, sample_squashed, squashed_backward, Adam, ArchitectureSpec, Checkpoint, ForwardCache, HeadKind, Network, Scalar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::SacConfig;
use crate::replay::Batch;
use crate::SacError;

pub const ACTION_DIM: usize = 2;

/// Standard normal draws in the network element type.
pub fn gaussian_noise<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| T::from_f64(StandardNormal.sample(rng))).collect()
}

/// Bellman targets `y = r + γ(1 − done)(min(Q'_1, Q'_2)(s', a') − α log π(a'|s'))`
/// with `a'` drawn from the current actor using noise `eps`.
pub fn critic_targets<T: Scalar>(actor: &Network<T>, targets: [&Network<T>; 2], batch: &Batch<T>, eps: &[T], alpha: f64, gamma: f64) -> Result<Vec<T>, SacError> {
    let n = batch.size;
    let head = actor.predict(&batch.next_obs, None, n)?;
    let s = sample_squashed(&head, eps, n, ACTION_DIM);
    let q1 = targets[0].predict(&batch.next_obs, Some(&s.action), n)?;
    let q2 = targets[1].predict(&batch.next_obs, Some(&s.action), n)?;
    Ok((0..n)
        .map(|b| {
            let soft_v = q1[b].as_f64().min(q2[b].as_f64()) - alpha * s.log_prob[b].as_f64();
            T::from_f64(batch.reward[b].as_f64() + gamma * (1.0 - batch.done[b].as_f64()) * soft_v)
        })
        .collect())
}

/// Mean squared error of one critic against fixed targets, and its parameter gradient.
pub fn critic_loss_grad<T: Scalar>(critic: &Network<T>, obs: &[T], action: &[T], y: &[T], n: usize) -> Result<(f64, Vec<T>), SacError> {
    let cache = critic.forward(obs, Some(action), n)?;
    critic_loss_grad_cached(critic, &cache, y)
}

fn critic_loss_grad_cached<T: Scalar>(critic: &Network<T>, cache: &ForwardCache<T>, y: &[T]) -> Result<(f64, Vec<T>), SacError> {
    let n = cache.batch;
    let q = cache.output();
    let mut loss = 0.0;
    let mut d = Vec::with_capacity(n);
    for b in 0..n {
        let err = q[b].as_f64() - y[b].as_f64();
        loss += err * err;
        d.push(T::from_f64(2.0 * err / n as f64));
    }
    let mut grads = vec![T::zero(); critic.param_count()];
    critic.backward(cache, &d, &mut grads)?;
    Ok((loss / n as f64, grads))
}

/// Actor objective value, gradient and the sampled log-probabilities.
#[derive(Debug, Clone)]
pub struct ActorLoss<T> {
    pub loss: f64,
    pub grads: Vec<T>,
    pub log_prob: Vec<f64>,
}

/// `mean(α log π(a|s) − min(Q_1, Q_2)(s, a))` with `a` reparameterized by `eps`.
/// Critic parameters are held fixed; their gradient flows only through `a`.
pub fn actor_loss_grad<T: Scalar>(actor: &Network<T>, critics: [&Network<T>; 2], obs: &[T], eps: &[T], alpha: f64, n: usize) -> Result<ActorLoss<T>, SacError> {
    let zero_action = vec![T::zero(); n * ACTION_DIM];
    let c1 = critics[0].forward(obs, Some(&zero_action), n)?;
    let c2 = critics[1].forward(obs, Some(&zero_action), n)?;
    actor_loss_grad_cached(actor, critics, [&c1, &c2], obs, eps, alpha, n)
}

/// As [`actor_loss_grad`], reusing the critics' observation features from
/// earlier passes over the same observations.
pub fn actor_loss_grad_cached<T: Scalar>(
    actor: &Network<T>,
    critics: [&Network<T>; 2],
    critic_caches: [&ForwardCache<T>; 2],
    obs: &[T],
    eps: &[T],
    alpha: f64,
    n: usize,
) -> Result<ActorLoss<T>, SacError> {
    let cache = actor.forward(obs, None, n)?;
    let s = sample_squashed(cache.output(), eps, n, ACTION_DIM);
    let c1 = critics[0].rehead(critic_caches[0], &s.action)?;
    let c2 = critics[1].rehead(critic_caches[1], &s.action)?;
    let (q1, q2) = (c1.output(), c2.output());
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut d1 = vec![T::zero(); n];
    let mut d2 = vec![T::zero(); n];
    for b in 0..n {
        let (a, c) = (q1[b].as_f64(), q2[b].as_f64());
        // ties go to the first critic
        if a <= c {
            d1[b] = T::from_f64(-inv_n);
        } else {
            d2[b] = T::from_f64(-inv_n);
        }
        loss += alpha * s.log_prob[b].as_f64() - a.min(c);
    }
    let mut d_action = critics[0].action_gradient(&c1, &d1)?;
    for (acc, g) in d_action.iter_mut().zip(critics[1].action_gradient(&c2, &d2)?) {
        *acc += g;
    }
    let d_log_prob = vec![T::from_f64(alpha * inv_n); n];
    let d_head = squashed_backward(&s, &d_action, &d_log_prob);
    let mut grads = vec![T::zero(); actor.param_count()];
    actor.backward(&cache, &d_head, &mut grads)?;
    Ok(ActorLoss { loss: loss * inv_n, grads, log_prob: s.log_prob.iter().map(|l| l.as_f64()).collect() })
}

/// Derivative of `mean(−ln α · (log π + target_entropy))` with respect to `ln α`.
pub fn temperature_grad(log_prob: &[f64], target_entropy: f64) -> f64 {
    -log_prob.iter().map(|l| l + target_entropy).sum::<f64>() / log_prob.len() as f64
}

/// `θ' ← (1 − τ)θ' + τθ`.
pub fn polyak_update<T: Scalar>(target: &mut Network<T>, source: &Network<T>, tau: f64) {
    assert_eq!(target.spec, source.spec, "polyak update between different architectures");
    let (keep, mix) = (T::from_f64(1.0 - tau), T::from_f64(tau));
    for (t, s) in target.params.iter_mut().zip(&source.params) {
        *t = keep * *t + mix * *s;
    }
}

fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Losses and temperature after one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    /// Mean of the two critic losses.
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    /// Sample estimate of the policy entropy.
    pub entropy: f64,
}

/// Actor, twin critics with targets, temperature and their optimizers.
#[derive(Debug, Clone)]
pub struct SacAgent<T> {
    pub config: SacConfig,
    pub actor: Network<T>,
    pub critics: [Network<T>; 2],
    pub targets: [Network<T>; 2],
    pub log_alpha: f64,
    actor_opt: Adam<T>,
    critic_opts: [Adam<T>; 2],
    alpha_opt: Adam<f64>,
    rng: ChaCha8Rng,
    pub updates: u64,
    /// Updates rejected because a loss or gradient was not finite.
    pub skipped_updates: u64,
}

impl<T: Scalar> SacAgent<T> {
    /// Fresh networks; the two critics get independent initializations and
    /// the targets start as copies.
    pub fn new(actor_spec: ArchitectureSpec, config: SacConfig, seed: u64) -> Result<Self, SacError> {
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let actor = Network::new(actor_spec.with_head(HeadKind::Actor), &mut init)?;
        let critic_spec = actor_spec.with_head(HeadKind::Critic);
        let critics = [Network::new(critic_spec, &mut init)?, Network::new(critic_spec, &mut init)?];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self::assemble(config, actor, critics.clone(), critics, config.init_log_alpha, rng))
    }

    fn assemble(config: SacConfig, actor: Network<T>, critics: [Network<T>; 2], targets: [Network<T>; 2], log_alpha: f64, rng: ChaCha8Rng) -> Self {
        Self {
            actor_opt: Adam::new(actor.param_count()),
            critic_opts: [Adam::new(critics[0].param_count()), Adam::new(critics[1].param_count())],
            alpha_opt: Adam::new(1),
            config,
            actor,
            critics,
            targets,
            log_alpha,
            rng,
            updates: 0,
            skipped_updates: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Stochastic action from `rng`, or the deterministic `tanh(mean)` when `rng` is `None`.
    pub fn act(&self, obs: &[T], rng: Option<&mut ChaCha8Rng>) -> Result<[f64; 2], SacError> {
        let head = self.actor.predict(obs, None, 1)?;
        let a = match rng {
            Some(rng) => sample_squashed(&head, &gaussian_noise(rng, ACTION_DIM), 1, ACTION_DIM).action,
            None => mean_action(&head, 1, ACTION_DIM),
        };
        Ok([a[0].as_f64(), a[1].as_f64()])
    }

    fn apply(params: &mut [T], grads: &mut [T], opt: &mut Adam<T>, lr: f64, clip: Option<f64>) {
        if let Some(max) = clip {
            clip_grad_norm(grads, max);
        }
        opt.update(params, grads, lr);
    }

    /// Critic losses and gradients against the shared Bellman target, with
    /// the forward caches for reuse. `None` when a value is not finite.
    #[allow(clippy::type_complexity)]
    fn critic_step(&mut self, batch: &Batch<T>) -> Result<Option<([(f64, Vec<T>); 2], [ForwardCache<T>; 2])>, SacError> {
        let eps = gaussian_noise(&mut self.rng, batch.size * ACTION_DIM);
        let y = critic_targets(&self.actor, [&self.targets[0], &self.targets[1]], batch, &eps, self.alpha(), self.config.gamma)?;
        if !all_finite(&y) {
            return Ok(None);
        }
        let c1 = self.critics[0].forward(&batch.obs, Some(&batch.action), batch.size)?;
        let c2 = self.critics[1].forward(&batch.obs, Some(&batch.action), batch.size)?;
        let l1 = critic_loss_grad_cached(&self.critics[0], &c1, &y)?;
        let l2 = critic_loss_grad_cached(&self.critics[1], &c2, &y)?;
        if [&l1, &l2].iter().any(|(loss, g)| !loss.is_finite() || !all_finite(g)) {
            return Ok(None);
        }
        Ok(Some(([l1, l2], [c1, c2])))
    }

    fn apply_critics(&mut self, losses: [(f64, Vec<T>); 2]) -> f64 {
        let mut total = 0.0;
        for (k, (loss, mut grads)) in losses.into_iter().enumerate() {
            Self::apply(&mut self.critics[k].params, &mut grads, &mut self.critic_opts[k], self.config.lr, self.config.grad_clip);
            total += loss;
        }
        total / 2.0
    }

    /// Regresses both critics to the shared Bellman target. Returns the mean
    /// loss, or `None` when a non-finite value made the update unsafe.
    pub fn critic_update(&mut self, batch: &Batch<T>) -> Result<Option<f64>, SacError> {
        Ok(self.critic_step(batch)?.map(|(losses, _)| self.apply_critics(losses)))
    }

    /// One actor step. Returns the loss and the sampled log-probabilities.
    pub fn actor_update(&mut self, batch: &Batch<T>) -> Result<Option<(f64, Vec<f64>)>, SacError> {
        let eps = gaussian_noise(&mut self.rng, batch.size * ACTION_DIM);
        let out = actor_loss_grad(&self.actor, [&self.critics[0], &self.critics[1]], &batch.obs, &eps, self.alpha(), batch.size)?;
        Ok(self.apply_actor(out))
    }

    fn apply_actor(&mut self, mut out: ActorLoss<T>) -> Option<(f64, Vec<f64>)> {
        if !out.loss.is_finite() || !all_finite(&out.grads) {
            return None;
        }
        Self::apply(&mut self.actor.params, &mut out.grads, &mut self.actor_opt, self.config.lr, self.config.grad_clip);
        Some((out.loss, out.log_prob))
    }

    /// Gradient step on `ln α`. Returns the temperature loss.
    pub fn temperature_update(&mut self, log_prob: &[f64]) -> f64 {
        let target = self.config.target_entropy;
        let g = temperature_grad(log_prob, target);
        let loss = -self.log_alpha * log_prob.iter().map(|l| l + target).sum::<f64>() / log_prob.len() as f64;
        if g.is_finite() {
            let mut p = [self.log_alpha];
            self.alpha_opt.update(&mut p, &[g], self.config.lr);
            self.log_alpha = p[0];
        }
        loss
    }

    pub fn polyak_update(&mut self) {
        for k in 0..2 {
            polyak_update(&mut self.targets[k], &self.critics[k], self.config.polyak);
        }
    }

    /// One SAC update. Critic and actor losses are both evaluated at the
    /// current parameters (the actor reuses the critics' observation
    /// features), then the critics, actor, temperature and targets step.
    pub fn update(&mut self, batch: &Batch<T>) -> Result<UpdateStats, SacError> {
        let skipped = |agent: &mut Self| {
            agent.skipped_updates += 1;
            Ok(UpdateStats { alpha: agent.alpha(), critic_loss: f64::NAN, actor_loss: f64::NAN, ..Default::default() })
        };
        let Some((losses, caches)) = self.critic_step(batch)? else {
            return skipped(self);
        };
        let eps = gaussian_noise(&mut self.rng, batch.size * ACTION_DIM);
        let actor = actor_loss_grad_cached(&self.actor, [&self.critics[0], &self.critics[1]], [&caches[0], &caches[1]], &batch.obs, &eps, self.alpha(), batch.size)?;
        if !actor.loss.is_finite() || !all_finite(&actor.grads) {
            return skipped(self);
        }
        let critic_loss = self.apply_critics(losses);
        let (actor_loss, log_prob) = self.apply_actor(actor).expect("checked finite");
        let alpha_loss = self.temperature_update(&log_prob);
        self.polyak_update();
        self.updates += 1;
        let entropy = -log_prob.iter().sum::<f64>() / log_prob.len() as f64;
        Ok(UpdateStats { critic_loss, actor_loss, alpha_loss, alpha: self.alpha(), entropy })
    }

    /// Networks and temperature; optimizer moments are not saved.
    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(step);
        ck.meta = serde_json::json!({ "sac": self.config, "updates": self.updates });
        ck.add_network("actor", &self.actor);
        ck.add_network("critic1", &self.critics[0]);
        ck.add_network("critic2", &self.critics[1]);
        ck.add_network("target1", &self.targets[0]);
        ck.add_network("target2", &self.targets[1]);
        ck.add_values("log_alpha", vec![self.log_alpha as f32]);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, config: SacConfig, seed: u64) -> Result<Self, SacError> {
        let log_alpha = ck.block("log_alpha").and_then(|(_, v)| v.first().copied()).ok_or_else(|| SacError::Config("checkpoint has no log_alpha".into()))?;
        let critics = [ck.network("critic1")?, ck.network("critic2")?];
        let targets = [ck.network("target1")?, ck.network("target2")?];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self::assemble(config, ck.network("actor")?, critics, targets, log_alpha as f64, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use coverage_nn::Arch;

    fn spec() -> ArchitectureSpec {
        ArchitectureSpec { arch: Arch::Mlp, head: HeadKind::Actor, scales: 1, grid_size: 2, lidar_rays: 1, action_dim: 2, conv_channels: 0, map_features: 0, hidden: 4 }
    }

    /// Critic whose Q is a constant `c`.
    fn constant_critic(c: f64) -> Network<f64> {
        let s = spec().with_head(HeadKind::Critic);
        let mut net = Network::from_params(s, vec![0.0; coverage_nn::param_count(&s)]).unwrap();
        let b = net.layout.head().bias_range();
        net.params[b.start] = c;
        net
    }

    fn batch(n: usize, done: f64) -> Batch<f64> {
        let len = spec().obs_len();
        Batch {
            size: n,
            obs: (0..n * len).map(|i| (i % 7) as f64 / 7.0).collect(),
            action: vec![0.25; n * 2],
            reward: (0..n).map(|b| b as f64 - 0.5).collect(),
            next_obs: (0..n * len).map(|i| (i % 5) as f64 / 5.0).collect(),
            done: vec![done; n],
        }
    }

    #[test]
    fn gamma_zero_or_done_gives_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let actor = Network::<f64>::new(spec(), &mut rng).unwrap();
        let (q1, q2) = (constant_critic(3.0), constant_critic(-2.0));
        let eps = gaussian_noise(&mut rng, 6);
        let b = batch(3, 0.0);
        assert_eq!(critic_targets(&actor, [&q1, &q2], &b, &eps, 0.7, 0.0).unwrap(), b.reward);
        let d = batch(3, 1.0);
        assert_eq!(critic_targets(&actor, [&q1, &q2], &d, &eps, 0.7, 0.99).unwrap(), d.reward);
    }

    #[test]
    fn target_uses_minimum_critic_and_entropy_bonus() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = Network::<f64>::new(spec(), &mut rng).unwrap();
        let (q1, q2) = (constant_critic(3.0), constant_critic(-2.0));
        let eps = gaussian_noise(&mut rng, 4);
        let b = batch(2, 0.0);
        let y = critic_targets(&actor, [&q1, &q2], &b, &eps, 0.5, 0.9).unwrap();
        let head = actor.predict(&b.next_obs, None, 2).unwrap();
        let lp = sample_squashed(&head, &eps, 2, 2).log_prob;
        for k in 0..2 {
            let want = b.reward[k] + 0.9 * (-2.0 - 0.5 * lp[k]);
            assert!((y[k] - want).abs() < 1e-12);
        }
        // swapping the critics changes nothing
        assert_eq!(y, critic_targets(&actor, [&q2, &q1], &b, &eps, 0.5, 0.9).unwrap());
    }

    #[test]
    fn zero_alpha_constant_critics_give_zero_actor_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let actor = Network::<f64>::new(spec(), &mut rng).unwrap();
        let (q1, q2) = (constant_critic(1.0), constant_critic(1.5));
        let eps = gaussian_noise(&mut rng, 8);
        let out = actor_loss_grad(&actor, [&q1, &q2], &batch(4, 0.0).obs, &eps, 0.0, 4).unwrap();
        assert!(out.grads.iter().all(|g| g.abs() < 1e-15));
        assert!((out.loss + 1.0).abs() < 1e-12);
    }

    #[test]
    fn temperature_moves_toward_target_entropy() {
        // entropy equal to target: zero gradient
        assert_eq!(temperature_grad(&[2.0, 2.0], -2.0), 0.0);
        let mut agent = SacAgent::<f64>::new(spec(), SacConfig { lr: 1e-2, ..Default::default() }, 0).unwrap();
        // log π = 3 means entropy −3 < −2: α must grow
        let before = agent.alpha();
        for _ in 0..10 {
            agent.temperature_update(&[3.0, 3.0]);
        }
        assert!(agent.alpha() > before && agent.alpha() > 0.0);
        for _ in 0..50 {
            agent.temperature_update(&[0.0, 0.0]);
        }
        assert!(agent.alpha() < before && agent.alpha() > 0.0);
    }

    #[test]
    fn polyak_extremes_and_geometric_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = Network::<f64>::new(spec(), &mut rng).unwrap();
        let orig = Network::<f64>::new(spec(), &mut rng).unwrap();
        let mut t = orig.clone();
        polyak_update(&mut t, &src, 0.0);
        assert_eq!(t, orig);
        polyak_update(&mut t, &src, 1.0);
        assert_eq!(t, src);
        let mut t = orig.clone();
        let dist = |a: &Network<f64>| a.params.iter().zip(&src.params).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let d0 = dist(&t);
        let tau = 0.005;
        let steps = (2f64.ln() / tau).round() as usize;
        for _ in 0..steps {
            polyak_update(&mut t, &src, tau);
        }
        let ratio = dist(&t) / d0;
        assert!((ratio - (1.0 - tau).powi(steps as i32)).abs() < 1e-9);
        assert!((ratio - 0.5).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let agent = SacAgent::<f32>::new(spec(), SacConfig::default(), 5).unwrap();
        let ck = agent.to_checkpoint(10);
        let back = SacAgent::<f32>::from_checkpoint(&ck, SacConfig::default(), 5).unwrap();
        assert_eq!(back.actor, agent.actor);
        assert_eq!(back.targets[1], agent.targets[1]);
        assert_eq!(back.log_alpha, agent.log_alpha);
        assert_ne!(agent.critics[0], agent.critics[1]);
    }
}
