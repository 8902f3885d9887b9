//! Versioned JSON checkpoints of a trained profile.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{SoftmaxCoding, Trajectory};
use crate::error::{Error, Result};
use crate::optim::Optimizer;
use crate::pvrnn::{AdaptiveSequence, NetworkConfig, NetworkParams};
use crate::trainer::{CognitiveProfile, EpochLog, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// ChaCha8 position, enough to continue the exact same stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte key, hex.
    pub seed: String,
    pub stream: u64,
    /// Word position as a decimal string (u128 does not fit JSON numbers).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        if self.seed.len() != 64 || !self.seed.is_ascii() {
            return Err(Error::Parse("rng seed must be 64 hex digits".into()));
        }
        let mut key = [0u8; 32];
        for (i, b) in key.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16)
                .map_err(|e| Error::Parse(format!("rng seed: {e}")))?;
        }
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Parse(format!("rng word_pos: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config: NetworkConfig,
    pub coding: SoftmaxCoding,
    pub profile: CognitiveProfile,
    pub train: TrainConfig,
    pub labels: Vec<String>,
    pub dataset: Vec<Trajectory>,
    pub params: NetworkParams,
    /// Trained adaptive offsets, one sequence per primitive.
    pub adaptive: Vec<AdaptiveSequence>,
    pub param_optimizer: Optimizer,
    pub adaptive_optimizers: Vec<Optimizer>,
    pub rng: RngState,
    pub epochs_done: usize,
    pub last_epoch: Option<EpochLog>,
}

#[derive(Deserialize)]
struct Header {
    schema_version: u32,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Version {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        self.config.validate()?;
        self.params.check_shapes(&self.config)?;
        let n = self.dataset.len();
        if self.labels.len() != n || self.adaptive.len() != n || self.adaptive_optimizers.len() != n {
            return Err(Error::Shape("labels, dataset and adaptive offsets disagree".into()));
        }
        for (a, t) in self.adaptive.iter().zip(&self.dataset) {
            if a.len() != t.steps() {
                return Err(Error::Shape("adaptive sequence length differs from its trajectory".into()));
            }
            for s in &a.steps {
                if s.mu.len() != self.config.layers.len() || s.sigma.len() != self.config.layers.len() {
                    return Err(Error::Shape("adaptive step layer count".into()));
                }
                for (k, l) in self.config.layers.iter().enumerate() {
                    if s.mu[k].len() != l.z_units || s.sigma[k].len() != l.z_units {
                        return Err(Error::Shape(format!("adaptive step width at layer {k}")));
                    }
                }
            }
        }
        if self.coding.dims() != self.config.output_dims || self.coding.bins() != self.config.bins_per_dim {
            return Err(Error::Shape("coding disagrees with network output".into()));
        }
        Ok(())
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(s)?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(Error::Version {
                found: header.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let ck: Checkpoint = serde_json::from_str(s)?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        // Write-then-rename so a crash never leaves a truncated checkpoint.
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json_string()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}
