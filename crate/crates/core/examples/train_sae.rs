// SPDX-License-Identifier: MIT OR Apache-2.0

//! Trains a TopK sparse autoencoder on one layer of the toy model and shows
//! that a planted residual direction gets its own feature.
//!
//! ```text
//! cargo run --release --example train_sae
//! ```

use circuitscope::model::{build_toy_model, generate_cells, ModelConfig, SyntheticWorld, WorldSpec};
use circuitscope::sae::{activation_frequency, collect_activations, train_sae, TrainConfig};

fn main() -> circuitscope::Result<()> {
    let config = ModelConfig::default();
    let world = SyntheticWorld::generate(&config, &WorldSpec::planted_circuit(), 1)?;
    let model = build_toy_model(&config, &world)?;
    let cells = generate_cells(&world, 200, config.seq_len, 2)?;
    let traces = model.forward_full(&cells.tokens)?;

    let layer = 2;
    let acts = collect_activations(&traces, layer);
    let train = TrainConfig { steps: 1500, ..TrainConfig::default() };
    let (sae, log) = train_sae(layer, &acts, &train)?;
    println!(
        "layer {layer}: {} features, k = {}, held-out loss {:.4} -> {:.4}",
        sae.d_sae(),
        sae.k,
        log.initial_loss(),
        log.final_loss()
    );

    let freq = activation_frequency(&sae, &acts)?;
    let alive = freq.iter().filter(|&&f| f >= 0.001).count();
    println!("{alive} features fire on at least 0.1% of positions");

    for edge in world.tracing_edges().take(4) {
        let (f, loading) = sae.best_feature_for(edge.source_direction);
        println!("direction {:>3} -> feature {f:>3} (decoder loading {loading:.3})", edge.source_direction);
    }
    Ok(())
}
