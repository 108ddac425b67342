use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::tensor::{MVariant, TransformMatrix};

pub const CHECKPOINT_FORMAT: &str = "tlgcn-checkpoint/1";

/// Trained parameters with the configuration needed to rebuild the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub n: usize,
    pub layers: usize,
    pub fdim: usize,
    pub t_slots: usize,
    pub bandwidth: usize,
    pub m_variant: MVariant,
    pub activation: Activation,
    pub init_seed: u64,
    pub split_seed: u64,
    pub params: ModelParams,
    pub manifest: RunManifest,
}

impl Checkpoint {
    pub fn new(cfg: &EncoderConfig, params: ModelParams, init_seed: u64, split_seed: u64, manifest: RunManifest) -> Result<Self> {
        if cfg.m.variant() == MVariant::Custom {
            return Err(Error::invalid("only M1/M2 transforms can be checkpointed"));
        }
        params.check_against(cfg, params.n())?;
        Ok(Self {
            format: CHECKPOINT_FORMAT.to_string(),
            n: params.n(),
            layers: cfg.layers,
            fdim: cfg.fdim,
            t_slots: cfg.t_slots(),
            bandwidth: cfg.bandwidth(),
            m_variant: cfg.m.variant(),
            activation: cfg.activation,
            init_seed,
            split_seed,
            params,
            manifest,
        })
    }

    pub fn encoder_config(&self) -> Result<EncoderConfig> {
        let m = TransformMatrix::build(self.m_variant, self.t_slots, self.bandwidth)?;
        Ok(EncoderConfig::new(self.layers, self.fdim, m)?.with_activation(self.activation))
    }

    /// Errors with the first differing field if this checkpoint cannot be
    /// evaluated on a graph of `n` nodes and `t_slots` slots.
    pub fn check_compatible(&self, n: usize, t_slots: usize, fdim: Option<usize>) -> Result<()> {
        let mismatch = |field, expected: usize, found: usize| Error::ConfigMismatch {
            field,
            expected: expected.to_string(),
            found: found.to_string(),
        };
        if self.n != n {
            return Err(mismatch("n", self.n, n));
        }
        if self.t_slots != t_slots {
            return Err(mismatch("t_slots", self.t_slots, t_slots));
        }
        if let Some(f) = fdim {
            if f != self.fdim {
                return Err(mismatch("fdim", self.fdim, f));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(bincode::serialize(self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ck: Checkpoint = bincode::deserialize(bytes)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::ConfigMismatch {
                field: "format",
                expected: CHECKPOINT_FORMAT.into(),
                found: ck.format,
            });
        }
        if !ck.params.is_finite() {
            return Err(Error::invalid("checkpoint holds non-finite parameters"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
