//! Fixed-capacity FIFO replay buffer.
//!
//! Map channels lie in [0, 1] and are stored as bytes (`round(255·v)`), which
//! cuts memory fourfold; the lidar tail is kept as `f32`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f32>,
    pub action: [f32; 2],
    pub reward: f32,
    pub next_obs: Vec<f32>,
    /// True only when the episode reached its goal; truncation keeps bootstrapping.
    pub done: bool,
}

/// A sampled minibatch in row-major `[batch, …]` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub size: usize,
    pub obs: Vec<T>,
    pub action: Vec<T>,
    pub reward: Vec<T>,
    pub next_obs: Vec<T>,
    /// 1 for terminal transitions, 0 otherwise.
    pub done: Vec<T>,
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize(q: u8) -> f32 {
    q as f32 / 255.0
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    map_len: usize,
    lidar_len: usize,
    maps: Vec<u8>,
    next_maps: Vec<u8>,
    lidar: Vec<f32>,
    next_lidar: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    dones: Vec<bool>,
    len: usize,
    /// Slot the next push writes to.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, map_len: usize, lidar_len: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            map_len,
            lidar_len,
            maps: Vec::new(),
            next_maps: Vec::new(),
            lidar: Vec::new(),
            next_lidar: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            len: 0,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_len(&self) -> usize {
        self.map_len + self.lidar_len
    }

    /// Stores a transition, evicting the oldest one when full.
    pub fn push(&mut self, t: &Transition) {
        assert_eq!(t.obs.len(), self.obs_len(), "observation size");
        assert_eq!(t.next_obs.len(), self.obs_len(), "next observation size");
        assert!(t.reward.is_finite(), "non-finite reward");
        let (m, l) = (self.map_len, self.lidar_len);
        let q = |o: &[f32]| o[..m].iter().map(|v| quantize(*v)).collect::<Vec<u8>>();
        if self.len < self.capacity {
            self.maps.extend(q(&t.obs));
            self.next_maps.extend(q(&t.next_obs));
            self.lidar.extend_from_slice(&t.obs[m..]);
            self.next_lidar.extend_from_slice(&t.next_obs[m..]);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.dones.push(t.done);
            self.len += 1;
        } else {
            let s = self.head;
            self.maps[s * m..(s + 1) * m].copy_from_slice(&q(&t.obs));
            self.next_maps[s * m..(s + 1) * m].copy_from_slice(&q(&t.next_obs));
            self.lidar[s * l..(s + 1) * l].copy_from_slice(&t.obs[m..]);
            self.next_lidar[s * l..(s + 1) * l].copy_from_slice(&t.next_obs[m..]);
            self.actions[2 * s..2 * s + 2].copy_from_slice(&t.action);
            self.rewards[s] = t.reward;
            self.dones[s] = t.done;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    /// Transition `i` counted from the oldest stored one, with dequantized maps.
    pub fn get(&self, i: usize) -> Transition {
        assert!(i < self.len, "replay index out of range");
        let s = if self.len < self.capacity { i } else { (self.head + i) % self.capacity };
        let mut obs = Vec::with_capacity(self.obs_len());
        let mut next_obs = Vec::with_capacity(self.obs_len());
        self.write_obs(s, false, &mut obs);
        self.write_obs(s, true, &mut next_obs);
        Transition { obs, action: [self.actions[2 * s], self.actions[2 * s + 1]], reward: self.rewards[s], next_obs, done: self.dones[s] }
    }

    fn write_obs(&self, slot: usize, next: bool, out: &mut Vec<f32>) {
        let (m, l) = (self.map_len, self.lidar_len);
        let (maps, lidar) = if next { (&self.next_maps, &self.next_lidar) } else { (&self.maps, &self.lidar) };
        out.extend(maps[slot * m..(slot + 1) * m].iter().map(|q| dequantize(*q)));
        out.extend_from_slice(&lidar[slot * l..(slot + 1) * l]);
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, size: usize, rng: &mut ChaCha8Rng) -> Batch<f32> {
        assert!(!self.is_empty(), "sampling from an empty replay buffer");
        let n = self.obs_len();
        let mut b = Batch {
            size,
            obs: Vec::with_capacity(size * n),
            action: Vec::with_capacity(size * 2),
            reward: Vec::with_capacity(size),
            next_obs: Vec::with_capacity(size * n),
            done: Vec::with_capacity(size),
        };
        for _ in 0..size {
            let s = rng.random_range(0..self.len);
            self.write_obs(s, false, &mut b.obs);
            self.write_obs(s, true, &mut b.next_obs);
            b.action.extend_from_slice(&self.actions[2 * s..2 * s + 2]);
            b.reward.push(self.rewards[s]);
            b.done.push(if self.dones[s] { 1.0 } else { 0.0 });
        }
        b
    }
}
