// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::params::SaeParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub feature_id: usize,
    pub layer: usize,
    /// Fraction of token positions where the feature is in the TopK set.
    pub activation_frequency: f64,
    pub annotation: Option<String>,
}

/// Per-feature activation frequencies and annotations, possibly spanning several layers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub entries: Vec<FeatureEntry>,
}

/// Per-feature fraction of rows whose TopK set contains the feature.
///
/// The frequencies always sum to `k`.
pub fn activation_frequency(sae: &SaeParams, activations: &Matrix) -> Result<Vec<f64>> {
    let n = activations.rows();
    if n == 0 {
        return Err(Error::Data("activation frequency needs at least one position".into()));
    }
    let mut counts = vec![0u64; sae.d_sae()];
    for r in 0..n {
        for (f, _) in sae.encode_topk(activations.row(r)).entries {
            counts[f] += 1;
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

/// Ascending ids of features at `layer` whose frequency is at least `threshold`.
pub fn active_features(catalog: &FeatureCatalog, layer: usize, threshold: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("frequency threshold {threshold} not in [0, 1]")));
    }
    let mut ids: Vec<usize> = catalog
        .entries
        .iter()
        .filter(|e| e.layer == layer && e.activation_frequency >= threshold)
        .map(|e| e.feature_id)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

/// Labels each feature whose decoder direction is within `min_cosine` of a
/// labelled residual basis direction (the strongest-loading one wins).
pub fn annotate_features(
    sae: &SaeParams,
    direction_labels: &BTreeMap<usize, String>,
    min_cosine: f64,
) -> BTreeMap<usize, String> {
    let mut out = BTreeMap::new();
    for f in 0..sae.d_sae() {
        let dir = sae.direction(f);
        let Some((best, w)) = dir.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
        else {
            continue;
        };
        if w.abs() >= min_cosine {
            if let Some(label) = direction_labels.get(&best) {
                out.insert(f, label.clone());
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct CatalogRow {
    feature_id: usize,
    layer: usize,
    activation_frequency: f64,
    annotation: String,
}

impl FeatureCatalog {
    /// Catalog for one layer; `annotations` maps feature id to label.
    pub fn for_layer(layer: usize, frequencies: &[f64], annotations: &BTreeMap<usize, String>) -> Self {
        let entries = frequencies
            .iter()
            .enumerate()
            .map(|(f, &freq)| FeatureEntry {
                feature_id: f,
                layer,
                activation_frequency: freq,
                annotation: annotations.get(&f).cloned(),
            })
            .collect();
        Self { entries }
    }

    pub fn extend(&mut self, other: FeatureCatalog) {
        self.entries.extend(other.entries);
    }

    /// Entries of one layer, indexed by feature id.
    pub fn layer(&self, layer: usize) -> BTreeMap<usize, &FeatureEntry> {
        self.entries.iter().filter(|e| e.layer == layer).map(|e| (e.feature_id, e)).collect()
    }

    /// CSV with columns `feature_id,layer,activation_frequency,annotation`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            w.serialize(CatalogRow {
                feature_id: e.feature_id,
                layer: e.layer,
                activation_frequency: e.activation_frequency,
                annotation: e.annotation.clone().unwrap_or_default(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut entries = Vec::new();
        for row in r.deserialize() {
            let row: CatalogRow = row?;
            if !(0.0..=1.0).contains(&row.activation_frequency) {
                return Err(Error::Data(format!("activation frequency out of range for feature {}", row.feature_id)));
            }
            entries.push(FeatureEntry {
                feature_id: row.feature_id,
                layer: row.layer,
                activation_frequency: row.activation_frequency,
                annotation: (!row.annotation.is_empty()).then_some(row.annotation),
            });
        }
        Ok(Self { entries })
    }
}
