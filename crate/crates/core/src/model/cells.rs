// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::SyntheticWorld;
use crate::error::{Error, Result};

/// Token sequences for a batch of synthetic cells, with generator-assigned pseudotime.
///
/// Cell ids are positions in the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBatch {
    pub tokens: Vec<Vec<u32>>,
    pub pseudotime: Vec<f64>,
}

impl CellBatch {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Sub-batch with the given cells, in the given order.
    pub fn select(&self, ids: &[usize]) -> CellBatch {
        CellBatch {
            tokens: ids.iter().map(|&i| self.tokens[i].clone()).collect(),
            pseudotime: ids.iter().map(|&i| self.pseudotime[i]).collect(),
        }
    }

    /// `n` distinct cell ids sampled without replacement, returned ascending.
    pub fn sample_ids(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        if n > self.len() {
            return Err(Error::Data(format!("cannot sample {n} cells from {}", self.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5341_4d50);
        let mut ids: Vec<usize> = (0..self.len()).collect();
        ids.shuffle(&mut rng);
        ids.truncate(n);
        ids.sort_unstable();
        Ok(ids)
    }
}

/// Draws `n` cells of `seq_len` tokens each.
///
/// Pseudotimes are a random permutation of an even grid on `[0, 1]` (so they
/// span the interval exactly whenever `n >= 2`). Each token is drawn with
/// replacement, late genes becoming more likely as pseudotime grows.
pub fn generate_cells(world: &SyntheticWorld, n: usize, seq_len: usize, seed: u64) -> Result<CellBatch> {
    if n == 0 {
        return Err(Error::Input("number of cells must be >= 1".into()));
    }
    if seq_len == 0 {
        return Err(Error::Input("seq_len must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4345_4c4c);
    let mut pseudotime: Vec<f64> =
        if n == 1 { vec![rng.random::<f64>()] } else { (0..n).map(|i| i as f64 / (n - 1) as f64).collect() };
    pseudotime.shuffle(&mut rng);

    let mut tokens = Vec::with_capacity(n);
    for &t in &pseudotime {
        let weights: Vec<f64> =
            world.gene_maturity.iter().map(|&m| (world.maturity_gradient * (t - 0.5) * m).exp()).collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::Numeric(format!("gene sampling weights: {e}")))?;
        tokens.push((0..seq_len).map(|_| dist.sample(&mut rng) as u32).collect());
    }
    Ok(CellBatch { tokens, pseudotime })
}
