//! Actor and critic networks: MLP, naive CNN and scale-grouped CNN.
//!
//! Input is the flat observation (coverage scales 1..m, obstacle 1..m,
//! frontier 1..m, each `grid × grid`, then the lidar vector). The critic also
//! takes the action, appended to the fusion input.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{conv_backward, conv_forward, dense_backward, dense_forward, ConvShape, DenseShape};
use crate::scalar::Scalar;
use crate::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Mlp,
    Cnn,
    Sgcnn,
}

impl Arch {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Some(Self::Mlp),
            "cnn" => Some(Self::Cnn),
            "sgcnn" => Some(Self::Sgcnn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Outputs mean and log standard deviation per action dimension.
    Actor,
    /// Outputs one Q value; takes the action as an extra input.
    Critic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub arch: Arch,
    pub head: HeadKind,
    pub scales: usize,
    pub grid_size: usize,
    pub lidar_rays: usize,
    pub action_dim: usize,
    /// Total convolution channels (split evenly across scale groups for SGCNN).
    pub conv_channels: usize,
    /// Width of the map feature layer after the convolutions.
    pub map_features: usize,
    /// Width of each of the two hidden fusion layers.
    pub hidden: usize,
}

impl ArchitectureSpec {
    /// Layer sizes of the reference design: 24 conv channels, 256-unit map
    /// features and fusion layers.
    pub fn standard(arch: Arch, head: HeadKind, scales: usize, grid_size: usize, lidar_rays: usize) -> Self {
        Self { arch, head, scales, grid_size, lidar_rays, action_dim: 2, conv_channels: 24, map_features: 256, hidden: 256 }
    }

    pub fn with_head(self, head: HeadKind) -> Self {
        Self { head, ..self }
    }

    pub fn map_channels(&self) -> usize {
        3 * self.scales
    }

    pub fn map_len(&self) -> usize {
        self.map_channels() * self.grid_size * self.grid_size
    }

    pub fn obs_len(&self) -> usize {
        self.map_len() + self.lidar_rays
    }

    pub fn out_len(&self) -> usize {
        match self.head {
            HeadKind::Actor => 2 * self.action_dim,
            HeadKind::Critic => 1,
        }
    }

    fn groups(&self) -> usize {
        match self.arch {
            Arch::Sgcnn => self.scales,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidSpec(m.to_string()));
        if self.scales == 0 || self.grid_size == 0 || self.action_dim == 0 || self.hidden == 0 {
            return bad("sizes must be positive");
        }
        if self.arch != Arch::Mlp {
            if self.grid_size % 2 != 0 || self.grid_size / 2 < 7 {
                return bad("grid size must be even and at least 14 for the convolution chain");
            }
            if self.conv_channels == 0 || self.conv_channels % self.groups() != 0 || self.map_features == 0 {
                return bad("conv channels must be a positive multiple of the group count");
            }
        }
        Ok(())
    }
}

/// Parameter offsets of every layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub convs: Vec<ConvShape>,
    pub map_fc: Option<DenseShape>,
    pub lidar_fc: Option<DenseShape>,
    /// Fusion layers; the last one is the linear head.
    pub fusion: Vec<DenseShape>,
    pub total: usize,
    /// Conv input channel `c` reads observation channel `channel_order[c]`.
    pub channel_order: Vec<usize>,
}

impl Layout {
    pub fn new(spec: &ArchitectureSpec) -> Self {
        let mut offset = 0;
        let dense = |n_in: usize, n_out: usize, relu: bool, offset: &mut usize| {
            let d = DenseShape { n_in, n_out, offset: *offset, relu };
            *offset += d.param_len();
            d
        };
        let m = spec.scales;
        let mut convs = Vec::new();
        let mut channel_order: Vec<usize> = (0..3 * m).collect();
        let (map_fc, lidar_fc, map_out, lidar_out) = if spec.arch == Arch::Mlp {
            (None, None, spec.map_len(), spec.lidar_rays)
        } else {
            let groups = spec.groups();
            if groups > 1 {
                // group-major: [cov_i, obs_i, front_i] for scale i
                channel_order = (0..m).flat_map(|i| [i, m + i, 2 * m + i]).collect();
            }
            let mut side = spec.grid_size;
            let mut in_ch = 3 * m;
            for (kernel, stride) in [(2, 2), (3, 1), (3, 1), (3, 1)] {
                let c = ConvShape { in_ch, out_ch: spec.conv_channels, groups, kernel, stride, in_h: side, in_w: side, offset, relu: true };
                offset += c.param_len();
                side = c.out_h();
                in_ch = spec.conv_channels;
                convs.push(c);
            }
            let flat = spec.conv_channels * side * side;
            let map_fc = dense(flat, spec.map_features, true, &mut offset);
            let lidar_fc = (spec.lidar_rays > 0).then(|| dense(spec.lidar_rays, spec.lidar_rays, true, &mut offset));
            (Some(map_fc), lidar_fc, spec.map_features, spec.lidar_rays)
        };
        let action_in = if spec.head == HeadKind::Critic { spec.action_dim } else { 0 };
        let fusion_in = map_out + lidar_out + action_in;
        let fusion = vec![
            dense(fusion_in, spec.hidden, true, &mut offset),
            dense(spec.hidden, spec.hidden, true, &mut offset),
            dense(spec.hidden, spec.out_len(), false, &mut offset),
        ];
        Self { convs, map_fc, lidar_fc, fusion, total: offset, channel_order }
    }

    pub fn head(&self) -> &DenseShape {
        self.fusion.last().expect("fusion has a head layer")
    }
}

/// Exact parameter count of an architecture.
pub fn param_count(spec: &ArchitectureSpec) -> usize {
    Layout::new(spec).total
}

/// Observation-dependent part of a forward pass: convolutions and the map
/// and lidar feature layers. Shared between passes that differ only in the
/// critic's action input.
#[derive(Debug, Clone)]
struct TrunkCache<T> {
    conv_in0: Vec<T>,
    conv_cols: Vec<Vec<T>>,
    conv_outs: Vec<Vec<T>>,
    map_in: Vec<T>,
    map_out: Vec<T>,
    lidar_in: Vec<T>,
    lidar_out: Vec<T>,
    /// `[batch, map + lidar features]`, the fusion input without the action.
    features: Vec<T>,
}

/// Intermediate values of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub batch: usize,
    trunk: Arc<TrunkCache<T>>,
    fusion_ins: Vec<Vec<T>>,
    fusion_outs: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Activated output of conv layer `layer` for one channel group, as
    /// `[channels_per_group, batch, h, w]`.
    pub fn conv_group_output(&self, spec: &ArchitectureSpec, layer: usize, group: usize) -> &[T] {
        let per_group = self.trunk.conv_outs[layer].len() / spec.groups();
        &self.trunk.conv_outs[layer][group * per_group..][..per_group]
    }

    pub fn output(&self) -> &[T] {
        self.fusion_outs.last().expect("forward produced an output")
    }
}

/// A network: architecture, layout and its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub spec: ArchitectureSpec,
    pub layout: Layout,
    pub params: Vec<T>,
}

impl<T: Scalar> Network<T> {
    /// Fan-in scaled uniform initialization, `U(−1/√fan_in, 1/√fan_in)` for
    /// weights and biases; an actor's log-std biases start at −1.
    pub fn new(spec: ArchitectureSpec, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        let mut params = vec![T::zero(); layout.total];
        let mut fill = |offset: usize, len: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[offset..offset + len] {
                *p = T::from_f64(rng.random_range(-bound..bound));
            }
        };
        for c in &layout.convs {
            fill(c.offset, c.param_len(), c.fan_in());
        }
        for d in layout.map_fc.iter().chain(&layout.lidar_fc).chain(&layout.fusion) {
            fill(d.offset, d.param_len(), d.n_in);
        }
        let mut net = Self { spec, layout, params };
        if spec.head == HeadKind::Actor {
            let b = net.layout.head().bias_range();
            for p in &mut net.params[b.start + spec.action_dim..b.end] {
                *p = T::from_f64(-1.0);
            }
        }
        Ok(net)
    }

    pub fn from_params(spec: ArchitectureSpec, params: Vec<T>) -> Result<Self, NnError> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        if params.len() != layout.total {
            return Err(NnError::ShapeMismatch { what: "parameters", expected: layout.total, actual: params.len() });
        }
        Ok(Self { spec, layout, params })
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Sets the head layer's weights and biases to zero.
    pub fn zero_head(&mut self) {
        let h = *self.layout.head();
        self.params[h.offset..h.offset + h.param_len()].iter_mut().for_each(|p| *p = T::zero());
    }

    pub fn convert<U: Scalar>(&self) -> Network<U> {
        Network { spec: self.spec, layout: self.layout.clone(), params: self.params.iter().map(|p| U::from_f64(p.as_f64())).collect() }
    }

    fn check_action(&self, action: Option<&[T]>, batch: usize) -> Result<(), NnError> {
        let spec = &self.spec;
        match (spec.head, action) {
            (HeadKind::Critic, Some(a)) if a.len() != batch * spec.action_dim => Err(NnError::ShapeMismatch { what: "action batch", expected: batch * spec.action_dim, actual: a.len() }),
            (HeadKind::Critic, None) => Err(NnError::ShapeMismatch { what: "action batch", expected: batch * spec.action_dim, actual: 0 }),
            (HeadKind::Actor, Some(a)) => Err(NnError::ShapeMismatch { what: "action batch", expected: 0, actual: a.len() }),
            _ => Ok(()),
        }
    }

    /// Batched forward pass. `obs` is `[batch, obs_len]`; `action` (`[batch,
    /// action_dim]`) is required for critics and rejected for actors.
    pub fn forward(&self, obs: &[T], action: Option<&[T]>, batch: usize) -> Result<ForwardCache<T>, NnError> {
        let obs_len = self.spec.obs_len();
        if obs.len() != batch * obs_len {
            return Err(NnError::ShapeMismatch { what: "observation batch", expected: batch * obs_len, actual: obs.len() });
        }
        self.check_action(action, batch)?;
        let trunk = Arc::new(self.trunk_forward(obs, batch));
        Ok(self.head_forward(trunk, action, batch))
    }

    /// Re-runs only the fusion layers of a critic pass with a different
    /// action, reusing the observation features of `cache`.
    pub fn rehead(&self, cache: &ForwardCache<T>, action: &[T]) -> Result<ForwardCache<T>, NnError> {
        self.check_action(Some(action), cache.batch)?;
        Ok(self.head_forward(cache.trunk.clone(), Some(action), cache.batch))
    }

    fn trunk_forward(&self, obs: &[T], batch: usize) -> TrunkCache<T> {
        let spec = &self.spec;
        let obs_len = spec.obs_len();
        let p = &self.params;
        let map_len = spec.map_len();
        let lidar_in: Vec<T> = obs.chunks_exact(obs_len).flat_map(|o| o[map_len..].iter().copied()).collect();
        let mut t = TrunkCache {
            conv_in0: Vec::new(),
            conv_cols: Vec::new(),
            conv_outs: Vec::new(),
            map_in: Vec::new(),
            map_out: Vec::new(),
            lidar_in,
            lidar_out: Vec::new(),
            features: Vec::new(),
        };
        let Some(map_fc) = &self.layout.map_fc else {
            t.features = obs.to_vec();
            return t;
        };
        let g2 = spec.grid_size * spec.grid_size;
        let mut x = Vec::with_capacity(spec.map_channels() * batch * g2);
        for &c in &self.layout.channel_order {
            for o in obs.chunks_exact(obs_len) {
                x.extend_from_slice(&o[c * g2..][..g2]);
            }
        }
        t.conv_in0 = x;
        for (k, c) in self.layout.convs.iter().enumerate() {
            let input = if k == 0 { &t.conv_in0 } else { &t.conv_outs[k - 1] };
            let (col, y) = conv_forward(c, p, input, batch);
            t.conv_cols.push(col);
            t.conv_outs.push(y);
        }
        // [C, B, HW] → [B, C·HW]
        let last = self.layout.convs.last().expect("conv chain");
        let hw = last.out_h() * last.out_w();
        let y = t.conv_outs.last().expect("conv chain");
        let mut flat = vec![T::zero(); y.len()];
        for c in 0..last.out_ch {
            for b in 0..batch {
                flat[(b * last.out_ch + c) * hw..][..hw].copy_from_slice(&y[(c * batch + b) * hw..][..hw]);
            }
        }
        t.map_out = dense_forward(map_fc, p, &flat, batch);
        t.map_in = flat;
        if let Some(l) = &self.layout.lidar_fc {
            t.lidar_out = dense_forward(l, p, &t.lidar_in, batch);
        }
        let lidar_feat = if self.layout.lidar_fc.is_some() { &t.lidar_out } else { &t.lidar_in };
        let (mw, lw) = (map_fc.n_out, spec.lidar_rays);
        let mut features = Vec::with_capacity(batch * (mw + lw));
        for b in 0..batch {
            features.extend_from_slice(&t.map_out[b * mw..][..mw]);
            features.extend_from_slice(&lidar_feat[b * lw..][..lw]);
        }
        t.features = features;
        t
    }

    fn head_forward(&self, trunk: Arc<TrunkCache<T>>, action: Option<&[T]>, batch: usize) -> ForwardCache<T> {
        let p = &self.params;
        let x = match action {
            Some(a) => {
                let fw = trunk.features.len() / batch.max(1);
                let aw = self.spec.action_dim;
                let mut fused = Vec::with_capacity(batch * (fw + aw));
                for b in 0..batch {
                    fused.extend_from_slice(&trunk.features[b * fw..][..fw]);
                    fused.extend_from_slice(&a[b * aw..][..aw]);
                }
                fused
            }
            None => trunk.features.clone(),
        };
        let mut cache = ForwardCache { batch, trunk, fusion_ins: Vec::new(), fusion_outs: Vec::new() };
        let mut x = x;
        for d in &self.layout.fusion {
            let y = dense_forward(d, p, &x, batch);
            cache.fusion_ins.push(x);
            x = y.clone();
            cache.fusion_outs.push(y);
        }
        cache
    }

    fn check_backward(&self, cache: &ForwardCache<T>, d_out: &[T]) -> Result<(), NnError> {
        let expected = cache.batch * self.spec.out_len();
        if d_out.len() != expected {
            return Err(NnError::ShapeMismatch { what: "output gradient", expected, actual: d_out.len() });
        }
        Ok(())
    }

    /// Gradient of a critic's output with respect to its action input only,
    /// backpropagating through the fusion layers and accumulating no
    /// parameter gradients.
    pub fn action_gradient(&self, cache: &ForwardCache<T>, d_out: &[T]) -> Result<Vec<T>, NnError> {
        self.check_backward(cache, d_out)?;
        if self.spec.head != HeadKind::Critic {
            return Err(NnError::InvalidSpec("action gradient of an actor".into()));
        }
        let p = &self.params;
        let mut scratch = vec![T::zero(); self.layout.total];
        let mut d = d_out.to_vec();
        for (k, layer) in self.layout.fusion.iter().enumerate().rev() {
            d = dense_backward(layer, p, &cache.fusion_ins[k], &cache.fusion_outs[k], &mut d, cache.batch, &mut scratch, true).expect("requested");
        }
        let fusion_in = self.layout.fusion[0].n_in;
        let aw = self.spec.action_dim;
        Ok(d.chunks_exact(fusion_in).flat_map(|r| r[fusion_in - aw..].iter().copied()).collect())
    }

    /// Backpropagates `d_out` (`[batch, out_len]`) through the cached pass,
    /// adding parameter gradients into `grads`. For critics the gradient with
    /// respect to the action input is returned.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &[T], grads: &mut [T]) -> Result<Option<Vec<T>>, NnError> {
        let spec = &self.spec;
        let batch = cache.batch;
        self.check_backward(cache, d_out)?;
        if grads.len() != self.layout.total {
            return Err(NnError::ShapeMismatch { what: "gradient buffer", expected: self.layout.total, actual: grads.len() });
        }
        let p = &self.params;
        let t = &cache.trunk;
        let mut d = d_out.to_vec();
        // the fusion input gradient is only needed for the action or a feature extractor
        let need_input = spec.head == HeadKind::Critic || self.layout.map_fc.is_some();
        for (k, layer) in self.layout.fusion.iter().enumerate().rev() {
            match dense_backward(layer, p, &cache.fusion_ins[k], &cache.fusion_outs[k], &mut d, batch, grads, k > 0 || need_input) {
                Some(dx) => d = dx,
                None => return Ok(None),
            }
        }
        let fusion_in = self.layout.fusion[0].n_in;
        let aw = if spec.head == HeadKind::Critic { spec.action_dim } else { 0 };
        let mw = self.layout.map_fc.map_or(spec.map_len(), |m| m.n_out);
        let lw = fusion_in - mw - aw;
        let d_action = (aw > 0).then(|| d.chunks_exact(fusion_in).flat_map(|r| r[mw + lw..].iter().copied()).collect::<Vec<T>>());

        if let Some(map_fc) = &self.layout.map_fc {
            if let Some(l) = &self.layout.lidar_fc {
                let mut dl: Vec<T> = d.chunks_exact(fusion_in).flat_map(|r| r[mw..mw + lw].iter().copied()).collect();
                dense_backward(l, p, &t.lidar_in, &t.lidar_out, &mut dl, batch, grads, false);
            }
            let mut dm: Vec<T> = d.chunks_exact(fusion_in).flat_map(|r| r[..mw].iter().copied()).collect();
            let dflat = dense_backward(map_fc, p, &t.map_in, &t.map_out, &mut dm, batch, grads, true).expect("requested");
            let last = self.layout.convs.last().expect("conv chain");
            let hw = last.out_h() * last.out_w();
            let mut dy = vec![T::zero(); dflat.len()];
            for c in 0..last.out_ch {
                for b in 0..batch {
                    dy[(c * batch + b) * hw..][..hw].copy_from_slice(&dflat[(b * last.out_ch + c) * hw..][..hw]);
                }
            }
            for (k, c) in self.layout.convs.iter().enumerate().rev() {
                let dx = conv_backward(c, p, &t.conv_cols[k], &t.conv_outs[k], &mut dy, batch, grads, k > 0);
                match dx {
                    Some(dx) => dy = dx,
                    None => break,
                }
            }
        }
        Ok(d_action)
    }

    /// Convenience forward returning only the outputs.
    pub fn predict(&self, obs: &[T], action: Option<&[T]>, batch: usize) -> Result<Vec<T>, NnError> {
        Ok(self.forward(obs, action, batch)?.fusion_outs.pop().expect("forward produced an output"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny(arch: Arch, head: HeadKind) -> ArchitectureSpec {
        ArchitectureSpec { arch, head, scales: 2, grid_size: 14, lidar_rays: 3, action_dim: 2, conv_channels: 4, map_features: 8, hidden: 6 }
    }

    #[test]
    fn standard_counts() {
        let sg = ArchitectureSpec::standard(Arch::Sgcnn, HeadKind::Actor, 4, 32, 24);
        let l = Layout::new(&sg);
        let conv: usize = l.convs.iter().map(|c| c.param_len()).sum();
        assert_eq!(conv, 4_272);
        assert_eq!(l.map_fc.unwrap().param_len(), 614_656);
        assert_eq!(l.lidar_fc.unwrap().param_len(), 600);
        assert_eq!(l.fusion[0].param_len() + l.fusion[1].param_len(), 137_728);
        assert_eq!(l.fusion[2].param_len(), 1_028);
        assert_eq!(param_count(&sg), 758_284);
        assert_eq!(param_count(&ArchitectureSpec::standard(Arch::Mlp, HeadKind::Actor, 4, 32, 24)), 3_218_948);
        assert_eq!(l.convs.last().map(|c| (c.out_h(), c.out_ch)), Some((10, 24)));
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::<f64>::new(tiny(Arch::Sgcnn, HeadKind::Critic), &mut rng).unwrap();
        let obs = vec![0.0; net.spec.obs_len()];
        assert!(net.forward(&obs[1..], Some(&[0.0, 0.0]), 1).is_err());
        assert!(net.forward(&obs, None, 1).is_err());
        assert!(net.forward(&obs, Some(&[0.0, 0.0]), 1).is_ok());
    }

    #[test]
    fn zero_head_gives_bias_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::<f64>::new(tiny(Arch::Cnn, HeadKind::Actor), &mut rng).unwrap();
        net.zero_head();
        let obs: Vec<f64> = (0..net.spec.obs_len()).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        assert_eq!(net.predict(&obs, None, 1).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn batch_rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for arch in [Arch::Mlp, Arch::Cnn, Arch::Sgcnn] {
            let net = Network::<f64>::new(tiny(arch, HeadKind::Critic), &mut rng).unwrap();
            let n = net.spec.obs_len();
            let obs: Vec<f64> = (0..3 * n).map(|_| rng.random_range(0.0..1.0)).collect();
            let act: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let all = net.predict(&obs, Some(&act), 3).unwrap();
            for b in 0..3 {
                let one = net.predict(&obs[b * n..][..n], Some(&act[b * 2..][..2]), 1).unwrap();
                assert!((one[0] - all[b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rehead_and_action_gradient_match_full_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for arch in [Arch::Mlp, Arch::Sgcnn] {
            let net = Network::<f64>::new(tiny(arch, HeadKind::Critic), &mut rng).unwrap();
            let n = net.spec.obs_len();
            let obs: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.0..1.0)).collect();
            let (a1, a2) = ([0.1, 0.2, -0.3, 0.4], [0.9, -0.8, 0.0, 0.5]);
            let c1 = net.forward(&obs, Some(&a1), 2).unwrap();
            let re = net.rehead(&c1, &a2).unwrap();
            let full = net.forward(&obs, Some(&a2), 2).unwrap();
            assert_eq!(re.output(), full.output());
            let mut g = vec![0.0; net.param_count()];
            let da = net.backward(&full, &[1.0, -2.0], &mut g).unwrap().unwrap();
            assert_eq!(net.action_gradient(&re, &[1.0, -2.0]).unwrap(), da);
        }
    }
}
