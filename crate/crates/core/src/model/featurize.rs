use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::StepContent;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub hash_seed: u64,
    /// Reserve the last two slots for `position / T` and the last-step flag.
    pub use_position: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            dim: 1024,
            hash_seed: 0,
            use_position: true,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::InvalidInput(format!(
                "featurizer dim must be >= 8, got {}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Number of slots the token hash may land in.
    pub fn hash_range(&self) -> usize {
        if self.use_position {
            self.dim - 2
        } else {
            self.dim
        }
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseFeatures {
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseFeatures {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

// FNV-1a over the token bytes, seeded through the offset basis and finished
// with a splitmix64 round so nearby seeds give unrelated buckets.
fn token_hash(token: &str, seed: u64) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = 0xcbf2_9ce4_8422_2325 ^ mix64(seed);
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    mix64(h)
}

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashed, L2-normalized bag of tokens plus optional position features.
///
/// `total` is the number of steps in the trajectory the step belongs to.
pub fn featurize_step(
    step: &StepContent,
    total: usize,
    config: &FeaturizerConfig,
) -> SparseFeatures {
    let range = config.hash_range() as u64;
    let mut buckets: Vec<usize> = step
        .tokens
        .iter()
        .map(|t| (token_hash(t, config.hash_seed) % range) as usize)
        .collect();
    buckets.sort_unstable();

    let mut indices = Vec::with_capacity(buckets.len() + 2);
    let mut values: Vec<f64> = Vec::with_capacity(buckets.len() + 2);
    for b in buckets {
        if indices.last() == Some(&b) {
            *values.last_mut().unwrap() += 1.0;
        } else {
            indices.push(b);
            values.push(1.0);
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }

    if config.use_position {
        let frac = step.position as f64 / total.max(1) as f64;
        indices.push(config.dim - 2);
        values.push(frac);
        if step.is_last {
            indices.push(config.dim - 1);
            values.push(1.0);
        }
    }
    SparseFeatures {
        dim: config.dim,
        indices,
        values,
    }
}
