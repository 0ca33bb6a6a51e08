//! Checkpoint files: one JSON header line followed by the raw little-endian
//! `f32` parameters of every stored block, in header order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::network::{ArchitectureSpec, Network};
use crate::scalar::Scalar;
use crate::NnError;

pub const CHECKPOINT_FORMAT: &str = "coverage-nn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub name: String,
    /// Architecture of a network block; absent for plain parameter vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ArchitectureSpec>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub step: u64,
    pub blocks: Vec<BlockHeader>,
    /// Free-form training metadata.
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub meta: serde_json::Value,
    pub blocks: Vec<(BlockHeader, Vec<f32>)>,
}

impl Checkpoint {
    pub fn new(step: u64) -> Self {
        Self { step, meta: serde_json::Value::Null, blocks: Vec::new() }
    }

    pub fn add_network<T: Scalar>(&mut self, name: &str, net: &Network<T>) {
        let values = net.params.iter().map(|p| p.as_f64() as f32).collect::<Vec<_>>();
        self.blocks.push((BlockHeader { name: name.into(), spec: Some(net.spec), len: values.len() }, values));
    }

    pub fn add_values(&mut self, name: &str, values: Vec<f32>) {
        self.blocks.push((BlockHeader { name: name.into(), spec: None, len: values.len() }, values));
    }

    pub fn block(&self, name: &str) -> Option<&(BlockHeader, Vec<f32>)> {
        self.blocks.iter().find(|(h, _)| h.name == name)
    }

    pub fn network<T: Scalar>(&self, name: &str) -> Result<Network<T>, NnError> {
        let (h, v) = self.block(name).ok_or_else(|| NnError::Checkpoint(format!("no block named {name:?}")))?;
        let spec = h.spec.ok_or_else(|| NnError::Checkpoint(format!("block {name:?} has no architecture")))?;
        Network::from_params(spec, v.iter().map(|x| T::from_f64(*x as f64)).collect())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), NnError> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            step: self.step,
            blocks: self.blocks.iter().map(|(h, _)| h.clone()).collect(),
            meta: self.meta.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (_, values) in &self.blocks {
            let mut bytes = Vec::with_capacity(values.len() * 4);
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self, NnError> {
        let mut reader = BufReader::new(input);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported checkpoint {} v{}", header.format, header.version)));
        }
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for h in header.blocks {
            if let Some(spec) = &h.spec {
                let want = crate::network::param_count(spec);
                if want != h.len {
                    return Err(NnError::ShapeMismatch { what: "checkpoint block", expected: want, actual: h.len });
                }
            }
            let mut bytes = vec![0u8; h.len * 4];
            reader.read_exact(&mut bytes).map_err(|e| NnError::Checkpoint(format!("block {:?}: {e}", h.name)))?;
            let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            blocks.push((h, values));
        }
        let mut rest = [0u8; 1];
        if reader.read(&mut rest)? != 0 {
            return Err(NnError::Checkpoint("trailing bytes after last block".into()));
        }
        Ok(Self { step: header.step, meta: header.meta, blocks })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::read(fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Arch, HeadKind};
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_identical() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let spec = ArchitectureSpec { arch: Arch::Sgcnn, head: HeadKind::Actor, scales: 2, grid_size: 14, lidar_rays: 4, action_dim: 2, conv_channels: 4, map_features: 8, hidden: 8 };
        let net = Network::<f32>::new(spec, &mut rng).unwrap();
        let mut ck = Checkpoint::new(42);
        ck.add_network("actor", &net);
        ck.add_values("log_alpha", vec![-0.5]);
        ck.meta = serde_json::json!({"level": 3});
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        let back = Checkpoint::read(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let net2: Network<f32> = back.network("actor").unwrap();
        let obs: Vec<f32> = (0..spec.obs_len()).map(|i| (i % 7) as f32 / 7.0).collect();
        let a = net.predict(&obs, None, 1).unwrap();
        let b = net2.predict(&obs, None, 1).unwrap();
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_file_is_error() {
        let mut ck = Checkpoint::new(0);
        ck.add_values("x", vec![1.0, 2.0]);
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        buf.pop();
        assert!(Checkpoint::read(buf.as_slice()).is_err());
    }
}
