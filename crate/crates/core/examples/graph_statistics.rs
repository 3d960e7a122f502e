// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hub, heavy-tail, attenuation and annotation-enrichment statistics over an
//! edge graph. The graph here is hand-built so the numbers are easy to check.
//!
//! ```text
//! cargo run --example graph_statistics
//! ```

use std::collections::BTreeMap;

use circuitscope::analysis::{analyze, AnalysisOptions};
use circuitscope::sae::FeatureCatalog;
use circuitscope::tracing::{Edge, EdgeGraph, GraphProvenance};

fn main() -> circuitscope::Result<()> {
    // Feature f has 12 - 2f edges spread over layers 3, 4, 5 with more in layer 3.
    let mut edges = Vec::new();
    for source in 0..6usize {
        for i in 0..(12 - 2 * source) {
            let target_layer = [3, 3, 3, 4, 4, 5][i % 6];
            edges.push(Edge {
                source_feature: source,
                target_layer,
                target_feature: 100 + i,
                cohens_d: -1.0,
                consistency: 0.9,
                n_cells: 20,
            });
        }
    }
    let provenance =
        GraphProvenance { source_layer: 2, downstream_layers: vec![3, 4, 5], ..GraphProvenance::default() };
    let graph = EdgeGraph::from_edges(edges, Some((0..8).collect()), provenance);

    let labels: BTreeMap<usize, String> = [(0, "cell cycle".to_string()), (2, "ion transport".to_string())].into();
    let catalog = FeatureCatalog::for_layer(2, &[0.01; 8], &labels);
    let options = AnalysisOptions { tail_thresholds: vec![8, 4], hub_count: 3, enrichment_tops: vec![4, 2] };
    let report = analyze(&graph, &catalog, &options)?;

    println!("{} edges from {} features", report.summary.total_edges, report.summary.features_traced);
    for row in &report.tail {
        println!("features with > {} edges: {} ({:.1}%)", row.threshold, row.count, 100.0 * row.fraction);
    }
    for share in &report.attenuation.layers {
        println!("layer {}: {} edges ({:.1}%)", share.layer, share.count, 100.0 * share.fraction.unwrap_or(0.0));
    }
    println!("strictly decreasing with depth: {}", report.attenuation.strictly_decreasing());
    for hub in &report.hubs {
        println!(
            "hub #{} feature {} ({} edges) {}",
            hub.rank,
            hub.feature_id,
            hub.total_edges,
            hub.annotation.as_deref().unwrap_or("-")
        );
    }
    for row in &report.enrichment {
        let k = row.top_k.map_or("all".to_string(), |k| format!("top {k}"));
        println!("{k}: {}/{} annotated", row.annotated, row.size);
    }
    Ok(())
}
