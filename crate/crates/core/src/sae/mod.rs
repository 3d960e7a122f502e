// SPDX-License-Identifier: MIT OR Apache-2.0

//! TopK sparse autoencoders over residual-stream activations.

mod catalog;
mod params;
mod train;

pub use catalog::{activation_frequency, active_features, annotate_features, FeatureCatalog, FeatureEntry};
pub use params::{SaeGradient, SaeParams, SparseActs};
pub use train::{collect_activations, train_sae, TrainConfig, TrainLog};
