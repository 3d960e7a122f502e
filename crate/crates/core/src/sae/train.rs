// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::SaeParams;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::ResidualTrace;

/// Plain mini-batch gradient descent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// `d_sae = expansion * d_model`.
    pub expansion: usize,
    pub k: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of rows held out for the reported loss.
    pub holdout_fraction: f64,
    /// Record held-out loss every this many steps (and at the end).
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            expansion: 4,
            k: 8,
            steps: 3000,
            batch_size: 64,
            learning_rate: 0.05,
            holdout_fraction: 0.1,
            log_every: 100,
            seed: 0,
        }
    }
}

/// Held-out loss trajectory of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub layer: usize,
    /// `(step, held-out loss)`, step 0 being the initialization.
    pub losses: Vec<(usize, f64)>,
}

impl TrainLog {
    pub fn initial_loss(&self) -> f64 {
        self.losses.first().map_or(f64::NAN, |l| l.1)
    }

    pub fn final_loss(&self) -> f64 {
        self.losses.last().map_or(f64::NAN, |l| l.1)
    }
}

/// Every position of `layer` across `traces`, as rows.
pub fn collect_activations(traces: &[ResidualTrace], layer: usize) -> Matrix {
    let d = traces.first().map_or(0, |t| t.hidden[layer].cols());
    let mut data = Vec::new();
    let mut rows = 0;
    for t in traces {
        data.extend_from_slice(t.hidden[layer].as_slice());
        rows += t.hidden[layer].rows();
    }
    Matrix::from_vec(rows, d, data)
}

/// Trains a TopK SAE for `layer` on the rows of `activations`.
pub fn train_sae(layer: usize, activations: &Matrix, config: &TrainConfig) -> Result<(SaeParams, TrainLog)> {
    let n = activations.rows();
    if n == 0 {
        return Err(Error::Data("cannot train an SAE on an empty dataset".into()));
    }
    if config.batch_size == 0 || config.log_every == 0 {
        return Err(Error::Config("batch_size and log_every must be >= 1".into()));
    }
    if !config.learning_rate.is_finite() || config.learning_rate < 0.0 {
        return Err(Error::Config("learning_rate must be finite and >= 0".into()));
    }
    let d_model = activations.cols();
    let mut sae = SaeParams::init(layer, d_model, config.expansion * d_model, config.k, config.seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0054_5241_494e ^ layer as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_hold = ((n as f64) * config.holdout_fraction).floor() as usize;
    // Keep at least one training row; with a single row it doubles as the held-out set.
    let n_hold = n_hold.min(n - 1);
    let (held, train) = order.split_at(n_hold);
    let held: Vec<&[f64]> = if held.is_empty() {
        train.iter().map(|&i| activations.row(i)).collect()
    } else {
        held.iter().map(|&i| activations.row(i)).collect()
    };
    let mut train: Vec<usize> = train.to_vec();

    let eval = |sae: &SaeParams, step: usize| -> Result<f64> {
        let loss = sae.reconstruction_loss(&held);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step, loss });
        }
        Ok(loss)
    };

    let mut log = TrainLog { layer, losses: vec![(0, eval(&sae, 0)?)] };
    let lr = config.learning_rate;
    let mut cursor = train.len();
    let mut batch: Vec<&[f64]> = Vec::with_capacity(config.batch_size);
    for step in 1..=config.steps {
        batch.clear();
        for _ in 0..config.batch_size.min(train.len()) {
            if cursor == train.len() {
                train.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(activations.row(train[cursor]));
            cursor += 1;
        }
        let (loss, grad) = sae.loss_gradient(&batch);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step, loss });
        }
        if lr > 0.0 {
            linalg::axpy(-lr, grad.encoder.as_slice(), sae.encoder.as_mut_slice());
            linalg::axpy(-lr, &grad.encoder_bias, &mut sae.encoder_bias);
            linalg::axpy(-lr, grad.decoder.as_slice(), sae.decoder.as_mut_slice());
            linalg::axpy(-lr, &grad.decoder_bias, &mut sae.decoder_bias);
            sae.normalize_decoder();
        }
        if step % config.log_every == 0 || step == config.steps {
            log.losses.push((step, eval(&sae, step)?));
        }
    }
    Ok((sae, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(steps: usize, lr: f64) -> TrainConfig {
        TrainConfig { expansion: 2, k: 2, steps, batch_size: 8, learning_rate: lr, log_every: 10, ..Default::default() }
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let data = Matrix::from_vec(20, 4, (0..80).map(|i| (i as f64 * 0.37).sin()).collect());
        let (sae, log) = train_sae(0, &data, &cfg(30, 0.0)).unwrap();
        let init = SaeParams::init(0, 4, 8, 2, 0).unwrap();
        assert_eq!(sae, init);
        assert!(log.losses.iter().all(|&(_, l)| l == log.initial_loss()));
    }

    #[test]
    fn repeated_vector_is_reconstructed() {
        let v = [0.5, -1.0, 2.0, 0.25];
        let data = Matrix::from_vec(16, 4, v.iter().copied().cycle().take(64).collect());
        let (sae, _) = train_sae(0, &data, &cfg(2000, 0.05)).unwrap();
        let recon = sae.decode(&sae.encode_topk(&v));
        for (r, x) in recon.iter().zip(v) {
            assert!((r - x).abs() < 1e-3, "{recon:?}");
        }
    }

    #[test]
    fn empty_dataset_is_error() {
        assert!(matches!(train_sae(0, &Matrix::zeros(0, 4), &cfg(1, 0.1)), Err(Error::Data(_))));
    }

    #[test]
    fn divergence_reports_step() {
        let data = Matrix::from_vec(16, 4, (0..64).map(|i| i as f64 * 10.0).collect());
        let err = train_sae(0, &data, &cfg(500, 1e6)).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { .. }), "{err}");
    }
}
