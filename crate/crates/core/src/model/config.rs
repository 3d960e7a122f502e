// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and seed of the toy residual-stream model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of residual blocks. Hidden snapshots are taken at boundaries `0..=n_layers`.
    pub n_layers: usize,
    pub d_model: usize,
    /// Vocabulary size (one token per gene).
    pub n_genes: usize,
    /// Tokens per cell.
    pub seq_len: usize,
    /// Width of each block's MLP hidden layer, as a multiple of `d_model`.
    pub mlp_expansion: usize,
    /// Scale of the random MLP output weights ("background mixing").
    pub mixing_scale: f64,
    /// Replace every nonlinearity with the identity.
    pub linear: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 6,
            d_model: 64,
            n_genes: 256,
            seq_len: 32,
            mlp_expansion: 2,
            mixing_scale: 0.05,
            linear: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 2 {
            return Err(Error::Config(format!("n_layers must be >= 2, got {}", self.n_layers)));
        }
        if self.d_model < 8 {
            return Err(Error::Config(format!("d_model must be >= 8, got {}", self.d_model)));
        }
        if self.n_genes < self.d_model {
            return Err(Error::Config(format!("n_genes ({}) must be >= d_model ({})", self.n_genes, self.d_model)));
        }
        if self.seq_len == 0 {
            return Err(Error::Config("seq_len must be >= 1".into()));
        }
        if self.mlp_expansion == 0 {
            return Err(Error::Config("mlp_expansion must be >= 1".into()));
        }
        if !self.mixing_scale.is_finite() || self.mixing_scale < 0.0 {
            return Err(Error::Config("mixing_scale must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn d_hidden(&self) -> usize {
        self.d_model * self.mlp_expansion
    }
}
