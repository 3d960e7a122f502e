// SPDX-License-Identifier: MIT OR Apache-2.0

//! Amplifies planted maturity features in early cells and measures how far
//! each cell's expression moves toward the late signature.
//!
//! ```text
//! cargo run --release --example steer_maturity
//! ```

use circuitscope::model::{build_toy_model, generate_cells, ModelConfig, SyntheticWorld, WorldSpec};
use circuitscope::sae::{collect_activations, train_sae, TrainConfig};
use circuitscope::steering::{compute_signatures, steering_report, SteerSpec};

fn main() -> circuitscope::Result<()> {
    let config = ModelConfig { n_genes: 1024, ..ModelConfig::default() };
    let spec = WorldSpec { steer_plants: vec![(5, 1.0), (0, -1.0)], ..WorldSpec::default() };
    let world = SyntheticWorld::generate(&config, &spec, 1)?;
    let model = build_toy_model(&config, &world)?;
    let cells = generate_cells(&world, 481, config.seq_len, 11)?;
    let traces = model.forward_full(&cells.tokens)?;
    let logits: Vec<Vec<f64>> = traces.iter().map(|t| t.logits.clone()).collect();
    let signatures = compute_signatures(&cells.pseudotime, &logits, 0.1)?;

    for plant in &world.steer_plants {
        let acts = collect_activations(&traces, plant.layer);
        let (sae, _) = train_sae(plant.layer, &acts, &TrainConfig::default())?;
        let feature = sae.best_feature_for(plant.direction).0;
        let steer = SteerSpec::new(plant.layer, feature, format!("plant-L{}", plant.layer));
        for outcome in steering_report(&model, &sae, &steer, &traces, &cells.pseudotime, &signatures)? {
            println!(
                "layer {} sign {:+} alpha {}: {} cells, mean shift {:+.4}, fraction positive {:.2}, top up-gene {:?}",
                plant.layer,
                plant.sign,
                outcome.alpha,
                outcome.cells.len(),
                outcome.mean_shift.unwrap_or(f64::NAN),
                outcome.fraction_positive.unwrap_or(f64::NAN),
                outcome.top_up_genes.first(),
            );
        }
    }
    Ok(())
}
