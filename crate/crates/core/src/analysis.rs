// SPDX-License-Identifier: MIT OR Apache-2.0

//! Descriptive statistics over a traced edge graph: per-feature counts,
//! heavy-tail summaries, hub tables, layer attenuation and annotation enrichment.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sae::FeatureCatalog;
use crate::tracing::EdgeGraph;

/// Total edges per traced source feature, zeros included.
pub fn edge_counts(graph: &EdgeGraph) -> BTreeMap<usize, usize> {
    graph.counts_per_feature()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub threshold: usize,
    /// Features with strictly more edges than `threshold`.
    pub count: usize,
    pub fraction: f64,
}

pub fn tail_stats(counts: &BTreeMap<usize, usize>, thresholds: &[usize]) -> Vec<TailRow> {
    let n = counts.len();
    thresholds
        .iter()
        .map(|&threshold| {
            let count = counts.values().filter(|&&c| c > threshold).count();
            TailRow { threshold, count, fraction: if n == 0 { 0.0 } else { count as f64 / n as f64 } }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubRow {
    pub rank: usize,
    pub feature_id: usize,
    pub total_edges: usize,
    pub annotation: Option<String>,
}

/// Features ranked by edge count (descending, ties by id ascending).
fn ranked(counts: &BTreeMap<usize, usize>) -> Vec<(usize, usize)> {
    let mut rows: Vec<(usize, usize)> = counts.iter().map(|(&f, &c)| (f, c)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    rows
}

fn annotations(catalog: &FeatureCatalog, layer: usize) -> BTreeMap<usize, Option<String>> {
    catalog.layer(layer).into_iter().map(|(f, e)| (f, e.annotation.clone())).collect()
}

/// Top `top_n` features by edge count, annotated from `catalog` at `layer`.
pub fn hub_table(counts: &BTreeMap<usize, usize>, catalog: &FeatureCatalog, layer: usize, top_n: usize) -> Vec<HubRow> {
    let ann = annotations(catalog, layer);
    ranked(counts)
        .into_iter()
        .take(top_n)
        .enumerate()
        .map(|(i, (f, c))| HubRow {
            rank: i + 1,
            feature_id: f,
            total_edges: c,
            annotation: ann.get(&f).cloned().flatten(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerShare {
    pub layer: usize,
    pub count: usize,
    /// `None` when the graph has no edges.
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationReport {
    pub total: usize,
    pub layers: Vec<LayerShare>,
}

impl AttenuationReport {
    /// Whether counts strictly decrease with distance from the source layer.
    pub fn strictly_decreasing(&self) -> bool {
        self.layers.windows(2).all(|w| w[0].count > w[1].count)
    }
}

/// Edge counts per downstream layer, in layer order.
pub fn attenuation(graph: &EdgeGraph) -> AttenuationReport {
    let mut per: BTreeMap<usize, usize> = graph.provenance.downstream_layers.iter().map(|&l| (l, 0)).collect();
    for e in &graph.edges {
        *per.entry(e.target_layer).or_default() += 1;
    }
    let total = graph.edges.len();
    let layers = per
        .into_iter()
        .map(|(layer, count)| LayerShare { layer, count, fraction: (total > 0).then(|| count as f64 / total as f64) })
        .collect();
    AttenuationReport { total, layers }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentRow {
    /// `None` for the all-features baseline.
    pub top_k: Option<usize>,
    pub annotated: usize,
    pub size: usize,
    pub fraction: f64,
}

/// Annotated fraction over all counted features and over each top-k cut.
pub fn annotation_enrichment(
    counts: &BTreeMap<usize, usize>,
    catalog: &FeatureCatalog,
    layer: usize,
    top_sizes: &[usize],
) -> Result<Vec<EnrichmentRow>> {
    let n = counts.len();
    if let Some(&k) = top_sizes.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::Config(format!("top-{k} cut is not within 1..={n} features")));
    }
    let ann = annotations(catalog, layer);
    let is_annotated = |f: usize| ann.get(&f).is_some_and(|a| a.is_some());
    let order = ranked(counts);
    let row = |top_k: Option<usize>, ids: &[(usize, usize)]| {
        let annotated = ids.iter().filter(|(f, _)| is_annotated(*f)).count();
        EnrichmentRow {
            top_k,
            annotated,
            size: ids.len(),
            fraction: if ids.is_empty() { 0.0 } else { annotated as f64 / ids.len() as f64 },
        }
    };
    let mut out = vec![row(None, &order)];
    out.extend(top_sizes.iter().map(|&k| row(Some(k), &order[..k])));
    Ok(out)
}

/// `(edge_count, n_features)` pairs, ascending by count.
pub fn count_histogram(counts: &BTreeMap<usize, usize>) -> Vec<(usize, usize)> {
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in counts.values() {
        *hist.entry(c).or_default() += 1;
    }
    hist.into_iter().collect()
}

/// Everything `analyze` reports, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub summary: crate::tracing::TraceSummary,
    pub tail: Vec<TailRow>,
    pub attenuation: AttenuationReport,
    pub enrichment: Vec<EnrichmentRow>,
    pub hubs: Vec<HubRow>,
}

/// Settings for [`analyze`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub tail_thresholds: Vec<usize>,
    pub hub_count: usize,
    pub enrichment_tops: Vec<usize>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { tail_thresholds: vec![1000, 500], hub_count: 20, enrichment_tops: vec![100, 20] }
    }
}

/// Runs every statistic. Enrichment cuts larger than the traced feature count are skipped.
pub fn analyze(graph: &EdgeGraph, catalog: &FeatureCatalog, options: &AnalysisOptions) -> Result<AnalysisReport> {
    let counts = edge_counts(graph);
    let layer = graph.provenance.source_layer;
    let tops: Vec<usize> = options.enrichment_tops.iter().copied().filter(|&k| k > 0 && k <= counts.len()).collect();
    Ok(AnalysisReport {
        summary: graph.summary(),
        tail: tail_stats(&counts, &options.tail_thresholds),
        attenuation: attenuation(graph),
        enrichment: annotation_enrichment(&counts, catalog, layer, &tops)?,
        hubs: hub_table(&counts, catalog, layer, options.hub_count),
    })
}

pub fn write_hub_csv<W: Write>(rows: &[HubRow], provenance: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {provenance}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "feature_id", "total_edges", "annotation"])?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.feature_id.to_string(),
            r.total_edges.to_string(),
            r.annotation.clone().unwrap_or_else(|| "unannotated".into()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(counts: &BTreeMap<usize, usize>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["edge_count", "n_features"])?;
    for (c, n) in count_histogram(counts) {
        w.write_record([c.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
