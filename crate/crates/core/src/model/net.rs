// SPDX-License-Identifier: MIT OR Apache-2.0

//! The residual network: token embedding, `n_layers` residual MLP blocks with
//! planted low-rank adapters, and a tied unembedding over mean-pooled positions.
//!
//! There is no attention, so positions never interact before pooling. Callers
//! rely on that to re-run only the positions an intervention touched.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::world::SyntheticWorld;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// One rank-1 term `strength * e_target e_sourceᵀ` of a block's adapter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankOne {
    pub target: usize,
    pub source: usize,
    pub strength: f64,
}

/// `h ← h + W_out φ(W_in h + b_in) + Σ strength · h[source] · e_target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub w_in: Matrix,
    pub b_in: Vec<f64>,
    pub w_out: Matrix,
    pub adapter: Vec<RankOne>,
}

/// Residual stream snapshots for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrace {
    pub cell_id: usize,
    /// `hidden[0]` is the embedding output, `hidden[l]` the stream after block `l`.
    /// Each snapshot is `seq_len x d_model`.
    pub hidden: Vec<Matrix>,
    pub logits: Vec<f64>,
}

/// Output of [`Model::forward_from_layer`].
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTrace {
    pub from_layer: usize,
    /// Snapshots for layers `from_layer + 1 ..= n_layers`.
    pub hidden: Vec<Matrix>,
    pub logits: Vec<f64>,
}

impl PartialTrace {
    /// Snapshot at `layer`, if it lies downstream of `from_layer`.
    pub fn hidden_at(&self, layer: usize) -> Option<&Matrix> {
        layer.checked_sub(self.from_layer + 1).and_then(|i| self.hidden.get(i))
    }
}

#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    /// `n_genes x d_model`; also the unembedding.
    pub embedding: Matrix,
    /// `blocks[l - 1]` produces layer `l`.
    pub blocks: Vec<Block>,
    full_passes: AtomicU64,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self::from_parts(self.config.clone(), self.embedding.clone(), self.blocks.clone())
    }
}

#[inline]
fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Builds the toy model for `world`. Deterministic in `config.seed`.
pub fn build_toy_model(config: &ModelConfig, world: &SyntheticWorld) -> Result<Model> {
    config.validate()?;
    world.check_against(config)?;
    if world.n_layers != config.n_layers {
        return Err(Error::Config(format!("world built for {} layers, model has {}", world.n_layers, config.n_layers)));
    }
    let d = config.d_model;
    let dh = config.d_hidden();

    let mut embedding = Matrix::zeros(config.n_genes, d);
    for (g, loads) in world.gene_loadings.iter().enumerate() {
        for &(dir, w) in loads {
            embedding.set(g, dir, embedding.get(g, dir) + w);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x004d_4f44_454c);
    let in_dist = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid normal");
    let out_dist = Normal::new(0.0, config.mixing_scale / (dh as f64).sqrt()).expect("valid normal");
    let mut blocks = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        let w_in = Matrix::from_vec(dh, d, (0..dh * d).map(|_| in_dist.sample(&mut rng)).collect());
        let w_out = Matrix::from_vec(d, dh, (0..d * dh).map(|_| out_dist.sample(&mut rng)).collect());
        blocks.push(Block { w_in, b_in: vec![0.0; dh], w_out, adapter: Vec::new() });
    }
    for e in &world.planted_edges {
        blocks[e.target_layer - 1].adapter.push(RankOne {
            target: e.target_direction,
            source: e.source_direction,
            strength: e.strength,
        });
        if e.transient && e.target_layer < config.n_layers {
            blocks[e.target_layer].adapter.push(RankOne {
                target: e.target_direction,
                source: e.target_direction,
                strength: -1.0,
            });
        }
    }
    for &(dir, block) in &world.fades {
        blocks[block - 1].adapter.push(RankOne { target: dir, source: dir, strength: -1.0 });
    }
    Ok(Model::from_parts(config.clone(), embedding, blocks))
}

impl Model {
    pub fn from_parts(config: ModelConfig, embedding: Matrix, blocks: Vec<Block>) -> Self {
        Self { config, embedding, blocks, full_passes: AtomicU64::new(0) }
    }

    pub fn n_layers(&self) -> usize {
        self.config.n_layers
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    /// Number of per-cell full forward passes run so far.
    pub fn full_pass_count(&self) -> u64 {
        self.full_passes.load(Ordering::Relaxed)
    }

    /// Checksum over all weights.
    pub fn checksum(&self) -> u64 {
        let mut parts = vec![self.embedding.checksum()];
        for b in &self.blocks {
            parts.push(b.w_in.checksum());
            parts.push(linalg::checksum(&b.b_in));
            parts.push(b.w_out.checksum());
            for r in &b.adapter {
                parts.push(linalg::checksum(&[r.target as f64, r.source as f64, r.strength]));
            }
        }
        let as_f64: Vec<f64> = parts.into_iter().map(f64::from_bits).collect();
        linalg::checksum(&as_f64)
    }

    /// Applies block `layer` (1-based) to one position.
    pub fn block_position(&self, layer: usize, h: &[f64], out: &mut [f64]) {
        let block = &self.blocks[layer - 1];
        let linear = self.config.linear;
        let mut act = block.w_in.matvec(h);
        for (a, b) in act.iter_mut().zip(&block.b_in) {
            *a += b;
            if !linear {
                *a = gelu(*a);
            }
        }
        out.copy_from_slice(h);
        for (r, o) in out.iter_mut().enumerate() {
            *o += linalg::dot(block.w_out.row(r), &act);
        }
        for term in &block.adapter {
            out[term.target] += term.strength * h[term.source];
        }
    }

    /// Runs one position from `from_layer` through block `to_layer`, recording
    /// every intermediate stream into `sink(layer, &h)`.
    pub fn propagate_position(
        &self,
        from_layer: usize,
        to_layer: usize,
        h: &[f64],
        mut sink: impl FnMut(usize, &[f64]),
    ) -> Vec<f64> {
        let mut cur = h.to_vec();
        let mut next = vec![0.0; cur.len()];
        for layer in from_layer + 1..=to_layer {
            self.block_position(layer, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
            sink(layer, &cur);
        }
        cur
    }

    /// Mean over positions of a `seq_len x d_model` snapshot.
    pub fn pool(&self, hidden: &Matrix) -> Vec<f64> {
        pool_rows(hidden)
    }

    /// Tied unembedding of the mean-pooled final stream.
    pub fn logits(&self, final_hidden: &Matrix) -> Vec<f64> {
        self.embedding.matvec(&pool_rows(final_hidden))
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.len() != self.config.seq_len {
            return Err(Error::Input(format!(
                "cell has {} tokens, model expects {}",
                tokens.len(),
                self.config.seq_len
            )));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.config.n_genes) {
            return Err(Error::Input(format!("token {t} out of range (n_genes = {})", self.config.n_genes)));
        }
        Ok(())
    }

    /// Full forward pass for one cell.
    pub fn forward_cell(&self, cell_id: usize, tokens: &[u32]) -> Result<ResidualTrace> {
        self.check_tokens(tokens)?;
        self.full_passes.fetch_add(1, Ordering::Relaxed);
        let (seq, d, nl) = (self.config.seq_len, self.d_model(), self.n_layers());
        let mut hidden: Vec<Matrix> = (0..=nl).map(|_| Matrix::zeros(seq, d)).collect();
        for (p, &t) in tokens.iter().enumerate() {
            hidden[0].row_mut(p).copy_from_slice(self.embedding.row(t as usize));
        }
        let mut next = vec![0.0; d];
        for layer in 1..=nl {
            for p in 0..seq {
                self.block_position(layer, hidden[layer - 1].row(p), &mut next);
                hidden[layer].row_mut(p).copy_from_slice(&next);
            }
        }
        let logits = self.logits(&hidden[nl]);
        Ok(ResidualTrace { cell_id, hidden, logits })
    }

    /// Full forward pass for a batch; order-preserving, cell ids are batch positions.
    pub fn forward_full(&self, cells: &[Vec<u32>]) -> Result<Vec<ResidualTrace>> {
        cells.par_iter().enumerate().map(|(i, t)| self.forward_cell(i, t)).collect()
    }

    /// Resumes the forward pass with `modified_hidden` standing in for the stream at `layer`.
    pub fn forward_from_layer(&self, layer: usize, modified_hidden: &Matrix) -> Result<PartialTrace> {
        let nl = self.n_layers();
        if layer >= nl {
            return Err(Error::Input(format!("layer {layer} out of range (n_layers = {nl})")));
        }
        if modified_hidden.rows() != self.config.seq_len || modified_hidden.cols() != self.d_model() {
            return Err(Error::Input(format!(
                "hidden is {}x{}, expected {}x{}",
                modified_hidden.rows(),
                modified_hidden.cols(),
                self.config.seq_len,
                self.d_model()
            )));
        }
        let (seq, d) = (self.config.seq_len, self.d_model());
        let mut hidden: Vec<Matrix> = (layer + 1..=nl).map(|_| Matrix::zeros(seq, d)).collect();
        let mut next = vec![0.0; d];
        for l in layer + 1..=nl {
            let idx = l - layer - 1;
            for p in 0..seq {
                let input = if idx == 0 { modified_hidden.row(p) } else { hidden[idx - 1].row(p) };
                self.block_position(l, input, &mut next);
                hidden[idx].row_mut(p).copy_from_slice(&next);
            }
        }
        let logits = self.logits(hidden.last().expect("at least one downstream layer"));
        Ok(PartialTrace { from_layer: layer, hidden, logits })
    }
}

/// Mean of the rows, summed in row order.
pub fn pool_rows(m: &Matrix) -> Vec<f64> {
    let mut acc = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (a, v) in acc.iter_mut().zip(m.row(r)) {
            *a += v;
        }
    }
    let n = m.rows() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_cells, WorldSpec};

    fn small() -> (ModelConfig, SyntheticWorld) {
        let cfg = ModelConfig { seed: 4, ..Default::default() };
        let w = SyntheticWorld::generate(&cfg, &WorldSpec::decaying(), 4).unwrap();
        (cfg, w)
    }

    #[test]
    fn empty_world_has_no_adapters() {
        let cfg = ModelConfig::default();
        let w = SyntheticWorld::generate(&cfg, &WorldSpec::unplanted(), 0).unwrap();
        let m = build_toy_model(&cfg, &w).unwrap();
        assert!(m.blocks.iter().all(|b| b.adapter.is_empty()));
    }

    #[test]
    fn deterministic_weights() {
        let (cfg, w) = small();
        let a = build_toy_model(&cfg, &w).unwrap().checksum();
        assert_eq!(a, build_toy_model(&cfg, &w).unwrap().checksum());
        let reseeded = ModelConfig { seed: 5, ..cfg };
        assert_ne!(a, build_toy_model(&reseeded, &w).unwrap().checksum());
    }

    #[test]
    fn mismatched_world_is_config_error() {
        let (_, w) = small();
        let cfg = ModelConfig { d_model: 32, ..Default::default() };
        assert!(matches!(build_toy_model(&cfg, &w), Err(Error::Config(_))));
    }

    #[test]
    fn trace_shapes_and_purity() {
        let (cfg, w) = small();
        let m = build_toy_model(&cfg, &w).unwrap();
        let cells = generate_cells(&w, 3, cfg.seq_len, 1).unwrap();
        let mut batch = cells.tokens.clone();
        batch.push(cells.tokens[0].clone());
        let traces = m.forward_full(&batch).unwrap();
        assert_eq!(traces.len(), 4);
        assert_eq!(traces[0].hidden.len(), cfg.n_layers + 1);
        assert_eq!(traces[0].logits.len(), cfg.n_genes);
        assert_eq!(traces[0].hidden, traces[3].hidden);
        assert_eq!(traces[2].cell_id, 2);
        assert!(m.forward_full(&[]).unwrap().is_empty());
    }

    #[test]
    fn bad_tokens_are_input_errors() {
        let (cfg, w) = small();
        let m = build_toy_model(&cfg, &w).unwrap();
        let mut toks = vec![0u32; cfg.seq_len];
        toks[3] = cfg.n_genes as u32;
        assert!(matches!(m.forward_cell(0, &toks), Err(Error::Input(_))));
    }

    #[test]
    fn resume_identity_every_layer() {
        let (cfg, w) = small();
        let m = build_toy_model(&cfg, &w).unwrap();
        let cells = generate_cells(&w, 2, cfg.seq_len, 2).unwrap();
        for t in m.forward_full(&cells.tokens).unwrap() {
            for l in 0..cfg.n_layers {
                let part = m.forward_from_layer(l, &t.hidden[l]).unwrap();
                assert_eq!(&part.hidden[..], &t.hidden[l + 1..]);
                assert_eq!(part.logits, t.logits);
            }
        }
        assert!(m.forward_from_layer(cfg.n_layers, &Matrix::zeros(cfg.seq_len, cfg.d_model)).is_err());
    }
}
