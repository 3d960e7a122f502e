// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exhaustive causal tracing on a world with planted edges, then scoring how
//! many of them the traced graph recovers.
//!
//! ```text
//! cargo run --release --example trace_circuit
//! ```

use std::collections::BTreeSet;

use circuitscope::model::{build_toy_model, generate_cells, ModelConfig, SyntheticWorld, WorldSpec};
use circuitscope::sae::{activation_frequency, collect_activations, train_sae, FeatureCatalog, TrainConfig};
use circuitscope::tracing::{trace_exhaustive, CleanCache, SaeSet, TraceOptions};
use rayon::prelude::*;

fn main() -> circuitscope::Result<()> {
    let config = ModelConfig { d_model: 128, n_genes: 1024, ..ModelConfig::default() };
    let world = SyntheticWorld::generate(&config, &WorldSpec::planted_circuit(), 1)?;
    let model = build_toy_model(&config, &world)?;
    let train_cells = generate_cells(&world, 400, config.seq_len, 2)?;
    let traces = model.forward_full(&train_cells.tokens)?;

    let train = TrainConfig { k: 4, ..TrainConfig::default() };
    let trained = (2..=5usize)
        .into_par_iter()
        .map(|layer| {
            let acts = collect_activations(&traces, layer);
            let (sae, _) = train_sae(layer, &acts, &train)?;
            let freq = activation_frequency(&sae, &acts)?;
            Ok((sae, freq))
        })
        .collect::<circuitscope::Result<Vec<_>>>()?;
    let mut catalog = FeatureCatalog::default();
    let mut saes = SaeSet::default();
    for (sae, freq) in trained {
        catalog.extend(FeatureCatalog::for_layer(sae.layer, &freq, &Default::default()));
        saes.insert(sae);
    }

    let cells = generate_cells(&world, 20, config.seq_len, 3)?;
    let cache = CleanCache::build(&model, &saes, &cells.tokens, 2, &[3, 4, 5])?;
    let graph = trace_exhaustive(&model, &saes, &cache, &catalog, &TraceOptions::default())?;
    let summary = graph.summary();
    println!(
        "traced {} features, {} edges, per layer {:?}",
        summary.features_traced, summary.total_edges, summary.per_layer
    );

    let found: BTreeSet<_> = graph.edges.iter().map(|e| (e.source_feature, e.target_layer, e.target_feature)).collect();
    let mut recovered = 0;
    let mut planted = 0;
    for edge in world.tracing_edges() {
        let src = saes.get(edge.source_layer)?.best_feature_for(edge.source_direction).0;
        let tgt = saes.get(edge.target_layer)?.best_feature_for(edge.target_direction).0;
        planted += 1;
        recovered += usize::from(found.contains(&(src, edge.target_layer, tgt)));
    }
    println!("recovered {recovered}/{planted} planted edges");
    Ok(())
}
