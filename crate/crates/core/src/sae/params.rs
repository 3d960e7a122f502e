// SPDX-License-Identifier: MIT OR Apache-2.0

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// TopK coefficients for one input: exactly `k` `(feature, value)` pairs,
/// ascending by feature id. A retained value may itself be `0.0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseActs {
    pub entries: Vec<(usize, f64)>,
}

impl SparseActs {
    /// Coefficient of `feature`, if it was retained.
    pub fn get(&self, feature: usize) -> Option<f64> {
        self.entries.iter().find(|(f, _)| *f == feature).map(|&(_, v)| v)
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.entries.iter().any(|(f, _)| *f == feature)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Scatters into a dense vector of length `d_sae`.
    pub fn to_dense(&self, d_sae: usize) -> Vec<f64> {
        let mut out = vec![0.0; d_sae];
        for &(f, v) in &self.entries {
            out[f] = v;
        }
        out
    }
}

/// Parameters of one layer's TopK autoencoder.
///
/// `decoder` is stored feature-major (`d_sae x d_model`): row `f` is the
/// decoder direction `d_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeParams {
    pub layer: usize,
    pub k: usize,
    /// `d_sae x d_model`.
    pub encoder: Matrix,
    pub encoder_bias: Vec<f64>,
    /// `d_sae x d_model`, rows are unit-norm decoder directions.
    pub decoder: Matrix,
    pub decoder_bias: Vec<f64>,
}

/// Gradient of the mean squared reconstruction loss, laid out like [`SaeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct SaeGradient {
    pub encoder: Matrix,
    pub encoder_bias: Vec<f64>,
    pub decoder: Matrix,
    pub decoder_bias: Vec<f64>,
}

impl SaeParams {
    /// Random unit decoder directions with the encoder tied to their transpose.
    pub fn init(layer: usize, d_model: usize, d_sae: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > d_sae {
            return Err(Error::Config(format!("k must be in 1..={d_sae}, got {k}")));
        }
        if d_model == 0 {
            return Err(Error::Config("d_model must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0053_4145 ^ ((layer as u64) << 32));
        let mut decoder = Matrix::zeros(d_sae, d_model);
        for f in 0..d_sae {
            let row = decoder.row_mut(f);
            loop {
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                if linalg::normalize(row) {
                    break;
                }
            }
        }
        Ok(Self {
            layer,
            k,
            encoder: decoder.clone(),
            encoder_bias: vec![0.0; d_sae],
            decoder,
            decoder_bias: vec![0.0; d_model],
        })
    }

    pub fn d_model(&self) -> usize {
        self.decoder_bias.len()
    }

    pub fn d_sae(&self) -> usize {
        self.encoder_bias.len()
    }

    /// Decoder direction `d_f`.
    pub fn direction(&self, feature: usize) -> &[f64] {
        self.decoder.row(feature)
    }

    /// Feature whose decoder direction loads most positively on residual basis
    /// direction `basis`, with that loading (the cosine, since rows are unit).
    /// Ties go to the lower feature id.
    pub fn best_feature_for(&self, basis: usize) -> (usize, f64) {
        (0..self.d_sae()).map(|f| (f, self.decoder.get(f, basis))).fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        })
    }

    /// `encoder · (h − decoder_bias) + encoder_bias`.
    pub fn pre_activations(&self, h: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = h.iter().zip(&self.decoder_bias).map(|(x, b)| x - b).collect();
        let mut pre = self.encoder.matvec(&centered);
        for (p, b) in pre.iter_mut().zip(&self.encoder_bias) {
            *p += b;
        }
        pre
    }

    /// Keeps exactly the `k` largest pre-activations; ties go to the lower feature id.
    pub fn encode_topk(&self, h: &[f64]) -> SparseActs {
        let pre = self.pre_activations(h);
        topk(&pre, self.k)
    }

    /// `decoder_bias + Σ a_f d_f`.
    pub fn decode(&self, acts: &SparseActs) -> Vec<f64> {
        let mut out = self.decoder_bias.clone();
        for &(f, a) in &acts.entries {
            linalg::axpy(a, self.direction(f), &mut out);
        }
        out
    }

    /// Mean over rows of the squared reconstruction error.
    pub fn reconstruction_loss(&self, batch: &[&[f64]]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let total: f64 = batch
            .iter()
            .map(|x| {
                let recon = self.decode(&self.encode_topk(x));
                recon.iter().zip(x.iter()).map(|(r, v)| (r - v) * (r - v)).sum::<f64>()
            })
            .sum();
        total / batch.len() as f64
    }

    /// Loss and its gradient. The TopK support is treated as fixed, so
    /// gradients flow only through retained coefficients.
    pub fn loss_gradient(&self, batch: &[&[f64]]) -> (f64, SaeGradient) {
        let (d_sae, d_model) = (self.d_sae(), self.d_model());
        let mut g = SaeGradient {
            encoder: Matrix::zeros(d_sae, d_model),
            encoder_bias: vec![0.0; d_sae],
            decoder: Matrix::zeros(d_sae, d_model),
            decoder_bias: vec![0.0; d_model],
        };
        if batch.is_empty() {
            return (0.0, g);
        }
        let scale = 2.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut centered = vec![0.0; d_model];
        for x in batch {
            for ((c, v), b) in centered.iter_mut().zip(x.iter()).zip(&self.decoder_bias) {
                *c = v - b;
            }
            let acts = self.encode_topk(x);
            let recon = self.decode(&acts);
            let resid: Vec<f64> = recon.iter().zip(x.iter()).map(|(r, v)| r - v).collect();
            loss += linalg::dot(&resid, &resid);

            linalg::axpy(scale, &resid, &mut g.decoder_bias);
            for &(f, a) in &acts.entries {
                linalg::axpy(scale * a, &resid, g.decoder.row_mut(f));
                let da = scale * linalg::dot(self.direction(f), &resid);
                linalg::axpy(da, &centered, g.encoder.row_mut(f));
                g.encoder_bias[f] += da;
                linalg::axpy(-da, self.encoder.row(f), &mut g.decoder_bias);
            }
        }
        (loss / batch.len() as f64, g)
    }

    /// Rescales every decoder direction to unit norm.
    pub fn normalize_decoder(&mut self) {
        for f in 0..self.d_sae() {
            linalg::normalize(self.decoder.row_mut(f));
        }
    }

    pub fn checksum(&self) -> u64 {
        let parts = [
            self.encoder.checksum(),
            linalg::checksum(&self.encoder_bias),
            self.decoder.checksum(),
            linalg::checksum(&self.decoder_bias),
            self.k as u64,
            self.layer as u64,
        ];
        let as_f64: Vec<f64> = parts.into_iter().map(f64::from_bits).collect();
        linalg::checksum(&as_f64)
    }
}

/// Descending by value, ascending by index on ties.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

pub(crate) fn topk(pre: &[f64], k: usize) -> SparseActs {
    let mut idx: Vec<(usize, f64)> = pre.iter().copied().enumerate().collect();
    let k = k.min(idx.len());
    if k < idx.len() {
        idx.select_nth_unstable_by(k, rank_order);
        idx.truncate(k);
    }
    idx.sort_unstable_by_key(|&(f, _)| f);
    SparseActs { entries: idx }
}
