use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DPNN";
const FORMAT_VERSION: u32 = 1;

/// One affine layer, `y = x W + b`. `weights` is `fan_in x fan_out`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Dense<T> {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// All weights and biases of a network, first layer first.
///
/// Checkpoints come in two layouts. JSON mirrors this struct. The binary
/// layout is little-endian: the magic `DPNN`, a `u32` format version, a
/// `u32` scalar width in bytes, a `u32` layer count, then per layer
/// `u32 fan_in`, `u32 fan_out`, the row-major weights and the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ParameterSet<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> ParameterSet<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    fan_in: l.fan_in,
                    fan_out: l.fan_out,
                    weights: vec![T::zero(); l.weights.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view: per layer, weights then bias.
    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn get(&self, index: usize) -> Option<T> {
        self.values().nth(index).copied()
    }

    pub fn set(&mut self, index: usize, value: T) {
        if let Some(v) = self.values_mut().nth(index) {
            *v = value;
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.fan_in == b.fan_in && a.fan_out == b.fan_out)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape {
                context: "parameter sets",
                expected: self.len(),
                got: other.len(),
            });
        }
        for (a, &b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn l2_norm(&self) -> T {
        self.values().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.len() * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(T::BYTES as u32).to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.fan_in as u32).to_le_bytes());
            out.extend_from_slice(&(l.fan_out as u32).to_le_bytes());
            for &v in l.weights.iter().chain(&l.bias) {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::parse("<parameter blob>", msg);
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let chunk = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(chunk)
        };
        let read_u32 = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        if read_u32(take(4)?) != FORMAT_VERSION {
            return Err(bad("unsupported format version"));
        }
        if read_u32(take(4)?) as usize != T::BYTES {
            return Err(bad("scalar width does not match"));
        }
        let n_layers = read_u32(take(4)?) as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let fan_in = read_u32(take(4)?) as usize;
            let fan_out = read_u32(take(4)?) as usize;
            let weights = take(fan_in * fan_out * T::BYTES)?
                .chunks_exact(T::BYTES)
                .map(T::read_le)
                .collect();
            let bias = take(fan_out * T::BYTES)?
                .chunks_exact(T::BYTES)
                .map(T::read_le)
                .collect();
            layers.push(Dense {
                fan_in,
                fan_out,
                weights,
                bias,
            });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = if path.extension().is_some_and(|e| e == "json") {
            serde_json::to_vec(self)?
        } else {
            self.to_bytes()
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_slice(&bytes)?)
        } else {
            Self::from_bytes(&bytes).map_err(|e| match e {
                Error::Parse { message, .. } => Error::parse(path, message),
                other => other,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mlp, NetworkSpec, OutputHead};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn checkpoint_layouts_round_trip(seed in any::<u64>(), h in 1usize..6) {
            let spec = NetworkSpec::with_hidden(2, &[h, h + 1], 3, OutputHead::Linear);
            let net = Mlp::<f64>::new(spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let p = net.params();
            prop_assert_eq!(&ParameterSet::<f64>::from_bytes(&p.to_bytes()).unwrap(), p);
            let json = serde_json::to_string(p).unwrap();
            prop_assert_eq!(&serde_json::from_str::<ParameterSet<f64>>(&json).unwrap(), p);
        }
    }

    #[test]
    fn blob_rejects_wrong_width_and_truncation() {
        let net = Mlp::<f32>::new(
            NetworkSpec::with_hidden(1, &[2], 1, OutputHead::Linear),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let bytes = net.params().to_bytes();
        assert_eq!(bytes.len(), 16 + 2 * 8 + net.params().len() * 4);
        assert!(ParameterSet::<f64>::from_bytes(&bytes).is_err());
        assert!(ParameterSet::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn flat_indexing_visits_weights_then_bias() {
        let mut p = ParameterSet::<f64> {
            layers: vec![Dense {
                fan_in: 1,
                fan_out: 2,
                weights: vec![1.0, 2.0],
                bias: vec![3.0, 4.0],
            }],
        };
        assert_eq!(
            p.values().copied().collect::<Vec<_>>(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
        p.set(2, 9.0);
        assert_eq!(p.get(2), Some(9.0));
        assert_eq!(p.l2_norm(), (1.0f64 + 4.0 + 81.0 + 16.0).sqrt());
    }
}
