// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{pool_rows, Model, ResidualTrace};
use crate::sae::{SaeParams, SparseActs};

/// Trained autoencoders keyed by layer.
#[derive(Debug, Clone, Default)]
pub struct SaeSet {
    by_layer: BTreeMap<usize, SaeParams>,
}

impl SaeSet {
    pub fn new(saes: impl IntoIterator<Item = SaeParams>) -> Self {
        Self { by_layer: saes.into_iter().map(|s| (s.layer, s)).collect() }
    }

    pub fn get(&self, layer: usize) -> Result<&SaeParams> {
        self.by_layer.get(&layer).ok_or_else(|| Error::Config(format!("no SAE for layer {layer}")))
    }

    pub fn insert(&mut self, sae: SaeParams) {
        self.by_layer.insert(sae.layer, sae);
    }

    pub fn layers(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_layer.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SaeParams> {
        self.by_layer.values()
    }
}

/// `row -= a * d` at one position.
#[inline]
pub fn subtract_feature(row: &mut [f64], coefficient: f64, direction: &[f64]) {
    linalg::axpy(-coefficient, direction, row);
}

/// Zeroes `feature`'s TopK coefficient at every position where it is nonzero.
pub fn ablate_feature(hidden: &Matrix, sae: &SaeParams, feature: usize) -> Result<Matrix> {
    if feature >= sae.d_sae() {
        return Err(Error::Input(format!("feature {feature} out of range (d_sae = {})", sae.d_sae())));
    }
    let mut out = hidden.clone();
    for p in 0..hidden.rows() {
        if let Some(a) = sae.encode_topk(hidden.row(p)).get(feature).filter(|&a| a != 0.0) {
            subtract_feature(out.row_mut(p), a, sae.direction(feature));
        }
    }
    Ok(out)
}

/// Mean over positions of the dense TopK codes of `hidden`.
pub fn encode_pooled(sae: &SaeParams, hidden: &Matrix) -> Vec<f64> {
    pool_rows(&encode_rows(sae, hidden))
}

/// Dense TopK codes, one row per position.
pub(crate) fn encode_rows(sae: &SaeParams, hidden: &Matrix) -> Matrix {
    let d_sae = sae.d_sae();
    let mut out = Matrix::zeros(hidden.rows(), d_sae);
    for p in 0..hidden.rows() {
        for (f, v) in sae.encode_topk(hidden.row(p)).entries {
            out.set(p, f, v);
        }
    }
    out
}

/// Clean state of one cell.
#[derive(Debug, Clone)]
pub struct CachedCell {
    pub cell_id: usize,
    /// `seq_len x d_model` stream at the source layer.
    pub source_hidden: Matrix,
    /// TopK codes of `source_hidden`, per position.
    pub source_codes: Vec<SparseActs>,
    /// Per downstream layer: dense codes per position (`seq_len x d_sae`).
    pub downstream_codes: Vec<Matrix>,
    /// Per downstream layer: codes pooled over positions.
    pub downstream_pooled: Vec<Vec<f64>>,
}

/// Clean forward-pass data reused by every per-feature intervention.
#[derive(Debug, Clone)]
pub struct CleanCache {
    pub source_layer: usize,
    pub downstream_layers: Vec<usize>,
    pub cells: Vec<CachedCell>,
}

impl CleanCache {
    /// Runs one full forward pass per cell and stores what tracing needs.
    pub fn build(
        model: &Model,
        saes: &SaeSet,
        cells: &[Vec<u32>],
        source_layer: usize,
        downstream_layers: &[usize],
    ) -> Result<Self> {
        let traces = model.forward_full(cells)?;
        Self::from_traces(&traces, saes, source_layer, downstream_layers, model.n_layers())
    }

    /// Same as [`CleanCache::build`] from already computed traces.
    pub fn from_traces(
        traces: &[ResidualTrace],
        saes: &SaeSet,
        source_layer: usize,
        downstream_layers: &[usize],
        n_layers: usize,
    ) -> Result<Self> {
        if source_layer >= n_layers {
            return Err(Error::Config(format!("source layer {source_layer} must be < n_layers = {n_layers}")));
        }
        if downstream_layers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("downstream layers must be strictly ascending".into()));
        }
        if let Some(&bad) = downstream_layers.iter().find(|&&l| l <= source_layer || l > n_layers) {
            return Err(Error::Config(format!("downstream layer {bad} must lie in ({source_layer}, {n_layers}]")));
        }
        let source_sae = saes.get(source_layer)?;
        let down_saes: Vec<&SaeParams> = downstream_layers.iter().map(|&l| saes.get(l)).collect::<Result<_>>()?;
        let cells = traces
            .par_iter()
            .map(|t| {
                let source_hidden = t.hidden[source_layer].clone();
                let source_codes =
                    (0..source_hidden.rows()).map(|p| source_sae.encode_topk(source_hidden.row(p))).collect();
                let downstream_codes: Vec<Matrix> =
                    downstream_layers.iter().zip(&down_saes).map(|(&l, sae)| encode_rows(sae, &t.hidden[l])).collect();
                let downstream_pooled = downstream_codes.iter().map(pool_rows).collect();
                CachedCell { cell_id: t.cell_id, source_hidden, source_codes, downstream_codes, downstream_pooled }
            })
            .collect();
        Ok(Self { source_layer, downstream_layers: downstream_layers.to_vec(), cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}
