//! Tanh-squashed Gaussian policy head.
//!
//! The actor output per sample is `[mean_1..mean_a, log_std_1..log_std_a]`.
//! Actions are `tanh(mean + exp(log_std)·ε)` with `ε ~ N(0, 1)` drawn by the
//! caller, so sampling is a deterministic function of the noise.

use crate::scalar::Scalar;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Guard inside `log(1 − tanh² + ε)`.
pub const TANH_EPS: f64 = 1e-6;

/// A batch of reparameterized samples and what the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample<T> {
    pub batch: usize,
    pub action_dim: usize,
    pub action: Vec<T>,
    pub log_prob: Vec<T>,
    pub mean: Vec<T>,
    /// Clamped log standard deviation.
    pub log_std: Vec<T>,
    pub eps: Vec<T>,
    /// Whether the raw log-std was inside the clamp range (gradient passes).
    log_std_free: Vec<bool>,
}

pub fn sample_squashed<T: Scalar>(head: &[T], eps: &[T], batch: usize, action_dim: usize) -> SquashedSample<T> {
    assert_eq!(head.len(), batch * 2 * action_dim, "actor output size");
    assert_eq!(eps.len(), batch * action_dim, "noise size");
    let (lo, hi) = (T::from_f64(LOG_STD_MIN), T::from_f64(LOG_STD_MAX));
    let half_log_2pi = T::from_f64(0.5 * (2.0 * std::f64::consts::PI).ln());
    let half = T::from_f64(0.5);
    let guard = T::from_f64(TANH_EPS);
    let mut s = SquashedSample {
        batch,
        action_dim,
        action: Vec::with_capacity(batch * action_dim),
        log_prob: Vec::with_capacity(batch),
        mean: Vec::with_capacity(batch * action_dim),
        log_std: Vec::with_capacity(batch * action_dim),
        eps: eps.to_vec(),
        log_std_free: Vec::with_capacity(batch * action_dim),
    };
    for b in 0..batch {
        let row = &head[b * 2 * action_dim..][..2 * action_dim];
        let mut lp = T::zero();
        for k in 0..action_dim {
            let mean = row[k];
            let raw = row[action_dim + k];
            let ls = raw.max(lo).min(hi);
            let e = eps[b * action_dim + k];
            let a = (mean + ls.exp() * e).tanh();
            lp += -half * e * e - ls - half_log_2pi - (T::one() - a * a + guard).ln();
            s.mean.push(mean);
            s.log_std.push(ls);
            s.log_std_free.push(raw >= lo && raw <= hi);
            s.action.push(a);
        }
        s.log_prob.push(lp);
    }
    s
}

/// Deterministic action `tanh(mean)`.
pub fn mean_action<T: Scalar>(head: &[T], batch: usize, action_dim: usize) -> Vec<T> {
    (0..batch).flat_map(|b| head[b * 2 * action_dim..][..action_dim].iter().map(|m| m.tanh())).collect()
}

/// Gradient w.r.t. the actor output given upstream gradients on the sampled
/// actions (`[batch, action_dim]`) and log-probabilities (`[batch]`), holding ε fixed.
pub fn squashed_backward<T: Scalar>(s: &SquashedSample<T>, d_action: &[T], d_log_prob: &[T]) -> Vec<T> {
    let (batch, ad) = (s.batch, s.action_dim);
    assert_eq!(d_action.len(), batch * ad);
    assert_eq!(d_log_prob.len(), batch);
    let guard = T::from_f64(TANH_EPS);
    let two = T::from_f64(2.0);
    let mut d_head = vec![T::zero(); batch * 2 * ad];
    for b in 0..batch {
        let dl = d_log_prob[b];
        for k in 0..ad {
            let i = b * ad + k;
            let a = s.action[i];
            let one_m = T::one() - a * a;
            // d log p / d u through the squashing correction
            let dlogp_du = two * a * one_m / (one_m + guard);
            let du = d_action[i] * one_m + dl * dlogp_du;
            let std = s.log_std[i].exp();
            d_head[b * 2 * ad + k] = du;
            d_head[b * 2 * ad + ad + k] = if s.log_std_free[i] { du * std * s.eps[i] - dl } else { T::zero() };
        }
    }
    d_head
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn actions_strictly_inside_unit_box() {
        let head = [0.0f64, 50.0, 2.0, 2.0];
        let s = sample_squashed(&head, &[30.0, -30.0], 1, 2);
        assert!(s.action.iter().all(|a: &f64| a.abs() <= 1.0));
        let s32 = sample_squashed(&[0.0f32, 0.0, -1.0, -1.0], &[0.5, -0.5], 1, 2);
        assert!(s32.action.iter().all(|a| a.abs() < 1.0));
        assert!(s.log_prob[0].is_finite());
    }

    #[test]
    fn zero_mean_centers_action() {
        assert_eq!(mean_action(&[0.0, 0.0, -1.0, -1.0], 1, 2), vec![0.0, 0.0]);
    }

    #[test]
    fn log_prob_matches_density_oracle() {
        // 1-D: p_a(a) = N(u; m, σ) / (1 − a²) with u = atanh(a); guard makes it approximate
        let (m, ls, e) = (0.3, -0.7, 0.4);
        let s = sample_squashed(&[m, ls], &[e], 1, 1);
        let sigma: f64 = (ls as f64).exp();
        let u = m + sigma * e;
        let a = u.tanh();
        let normal = (-0.5 * e * e).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let want = (normal / (1.0 - a * a)).ln();
        assert!((s.log_prob[0] - want).abs() < 1e-5);
    }

    #[test]
    fn clamp_blocks_gradient() {
        let s = sample_squashed(&[0.1, 5.0], &[0.2], 1, 1);
        assert_eq!(s.log_std[0], 2.0);
        let d = squashed_backward(&s, &[1.0], &[1.0]);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (batch, ad) = (3, 2);
        let head: Vec<f64> = (0..batch * 2 * ad).map(|_| rng.random_range(-1.5..1.5)).collect();
        let eps: Vec<f64> = (0..batch * ad).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ca: Vec<f64> = (0..batch * ad).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cl: Vec<f64> = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |h: &[f64]| {
            let s = sample_squashed(h, &eps, batch, ad);
            s.action.iter().zip(&ca).map(|(a, c)| a * c).sum::<f64>() + s.log_prob.iter().zip(&cl).map(|(l, c)| l * c).sum::<f64>()
        };
        let s = sample_squashed(&head, &eps, batch, ad);
        let g = squashed_backward(&s, &ca, &cl);
        let h = 1e-6;
        for i in 0..head.len() {
            let mut p = head.clone();
            p[i] += h;
            let lp = loss(&p);
            p[i] -= 2.0 * h;
            let lm = loss(&p);
            let num = (lp - lm) / (2.0 * h);
            assert!((g[i] - num).abs() / (g[i].abs() + 1e-8) < 1e-4, "{i}: {} vs {num}", g[i]);
        }
    }
}
