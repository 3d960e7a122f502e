// SPDX-License-Identifier: MIT OR Apache-2.0

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{subtract_feature, CleanCache, SaeSet};
use super::graph::{Edge, EdgeGraph, GraphProvenance};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::Model;
use crate::sae::{active_features, FeatureCatalog};
use crate::stats::{cohens_d, SignTally, WelfordAccumulator};

/// Edge significance and feature gating thresholds; comparisons are strict
/// for `d` and `consistency`, inclusive for `frequency`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub d: f64,
    pub consistency: f64,
    pub frequency: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { d: 0.5, consistency: 0.7, frequency: 0.001 }
    }
}

impl Thresholds {
    pub fn is_significant(&self, d: f64, consistency: f64) -> bool {
        d.abs() > self.d && consistency > self.consistency
    }
}

/// Paired clean/ablated statistics for one downstream feature.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetStats {
    pub clean: WelfordAccumulator,
    pub ablated: WelfordAccumulator,
    pub signs: SignTally,
}

impl TargetStats {
    pub fn push(&mut self, clean: f64, ablated: f64) {
        self.clean.update(clean);
        self.ablated.update(ablated);
        self.signs.push(ablated - clean);
    }

    pub fn cohens_d(&self) -> Result<f64> {
        cohens_d(&self.clean, &self.ablated)
    }

    pub fn consistency(&self) -> f64 {
        self.signs.consistency()
    }
}

/// Statistics of one source feature's ablation against every downstream feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrace {
    pub feature: usize,
    pub downstream_layers: Vec<usize>,
    /// `stats[i][target]` for `downstream_layers[i]`.
    pub stats: Vec<Vec<TargetStats>>,
}

impl FeatureTrace {
    /// Significant edges, in canonical order.
    pub fn edges(&self, thresholds: &Thresholds) -> Result<Vec<Edge>> {
        let mut out = Vec::new();
        for (&layer, targets) in self.downstream_layers.iter().zip(&self.stats) {
            for (target, s) in targets.iter().enumerate() {
                let d = s.cohens_d()?;
                let c = s.consistency();
                if thresholds.is_significant(d, c) {
                    out.push(Edge {
                        source_feature: self.feature,
                        target_layer: layer,
                        target_feature: target,
                        cohens_d: d,
                        consistency: c,
                        n_cells: s.clean.count,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Mean over positions where some rows are replaced; same summation order as
/// [`crate::model::pool_rows`], so unmodified cells pool bit-identically.
fn pool_mixed(cached: &Matrix, replaced: &[Option<Vec<f64>>]) -> Vec<f64> {
    let mut acc = vec![0.0; cached.cols()];
    for (p, rep) in replaced.iter().enumerate() {
        let row = rep.as_deref().unwrap_or_else(|| cached.row(p));
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = cached.rows() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Ablates `feature` at the cache's source layer in every cached cell and
/// accumulates clean vs ablated downstream activations.
///
/// Cells where the feature is inactive still contribute, with ablated equal to clean.
pub fn trace_feature(
    model: &Model,
    cache: &CleanCache,
    saes: &SaeSet,
    source_layer: usize,
    feature: usize,
) -> Result<FeatureTrace> {
    if cache.source_layer != source_layer {
        return Err(Error::Config(format!(
            "cache was built for source layer {}, not {source_layer}",
            cache.source_layer
        )));
    }
    let source_sae = saes.get(source_layer)?;
    if feature >= source_sae.d_sae() {
        return Err(Error::Input(format!("feature {feature} out of range (d_sae = {})", source_sae.d_sae())));
    }
    let layers = &cache.downstream_layers;
    let down_saes = layers.iter().map(|&l| saes.get(l)).collect::<Result<Vec<_>>>()?;
    let mut stats: Vec<Vec<TargetStats>> = down_saes.iter().map(|s| vec![TargetStats::default(); s.d_sae()]).collect();
    let last = layers.last().copied().unwrap_or(source_layer);
    let direction = source_sae.direction(feature);

    for cell in &cache.cells {
        let seq = cell.source_hidden.rows();
        let mut replaced: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; seq]; layers.len()];
        let mut any = false;
        for (p, codes) in cell.source_codes.iter().enumerate() {
            let Some(a) = codes.get(feature).filter(|&a| a != 0.0) else { continue };
            any = true;
            let mut h = cell.source_hidden.row(p).to_vec();
            subtract_feature(&mut h, a, direction);
            model.propagate_position(source_layer, last, &h, |layer, stream| {
                if let Some(i) = layers.iter().position(|&l| l == layer) {
                    replaced[i][p] = Some(down_saes[i].encode_topk(stream).to_dense(down_saes[i].d_sae()));
                }
            });
        }
        for (i, targets) in stats.iter_mut().enumerate() {
            let clean = &cell.downstream_pooled[i];
            if any {
                let ablated = pool_mixed(&cell.downstream_codes[i], &replaced[i]);
                for (t, s) in targets.iter_mut().enumerate() {
                    s.push(clean[t], ablated[t]);
                }
            } else {
                for (t, s) in targets.iter_mut().enumerate() {
                    s.push(clean[t], clean[t]);
                }
            }
        }
    }
    Ok(FeatureTrace { feature, downstream_layers: layers.clone(), stats })
}

/// Run-level settings for [`trace_exhaustive`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceOptions {
    pub thresholds: Thresholds,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    /// Print progress to stderr every this many features (0 disables).
    pub progress_every: usize,
    pub config_hash: String,
    pub seed: u64,
}

/// Traces every source feature passing the frequency gate and assembles the
/// significant edges into a canonical graph.
pub fn trace_exhaustive(
    model: &Model,
    saes: &SaeSet,
    cache: &CleanCache,
    catalog: &FeatureCatalog,
    options: &TraceOptions,
) -> Result<EdgeGraph> {
    let source_layer = cache.source_layer;
    let features = active_features(catalog, source_layer, options.thresholds.frequency)?;
    let d_sae = saes.get(source_layer)?.d_sae();
    if let Some(&bad) = features.iter().find(|&&f| f >= d_sae) {
        return Err(Error::Data(format!("catalog feature {bad} exceeds d_sae = {d_sae}")));
    }
    if cache.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: cache.len() as u64 });
    }
    let done = AtomicUsize::new(0);
    let total = features.len();
    let run = || -> Result<Vec<Edge>> {
        features
            .par_iter()
            .try_fold(Vec::new, |mut buf, &f| {
                let wrap = |e| Error::FeatureTrace { feature: f, source: Box::new(e) };
                let trace = trace_feature(model, cache, saes, source_layer, f).map_err(wrap)?;
                buf.extend(trace.edges(&options.thresholds).map_err(wrap)?);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if options.progress_every > 0 && (n.is_multiple_of(options.progress_every) || n == total) {
                    eprintln!("traced {n}/{total} features");
                }
                Ok(buf)
            })
            .try_reduce(Vec::new, |mut a, b| {
                a.extend(b);
                Ok(a)
            })
    };
    let mut edges = if options.workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)?
    };
    edges.sort_by_key(|e| (e.source_feature, e.target_layer, e.target_feature));

    Ok(EdgeGraph {
        edges,
        traced_features: features,
        provenance: GraphProvenance {
            config_hash: options.config_hash.clone(),
            seed: options.seed,
            thresholds: options.thresholds,
            source_layer,
            downstream_layers: cache.downstream_layers.clone(),
            n_cells: cache.len() as u64,
        },
    })
}
