// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seven-condition ablation of feature triplets that carry copies of one
//! signal. Redundant copies make joint ablation effects subadditive.
//!
//! ```text
//! cargo run --release --example triplet_redundancy
//! ```

use circuitscope::combinatorics::{run_conditions, triplet_report, Member, ReportOptions, Triplet, TripletKind};
use circuitscope::model::{build_toy_model, generate_cells, ModelConfig, SyntheticWorld, WorldSpec};
use circuitscope::sae::{collect_activations, train_sae, TrainConfig};
use circuitscope::tracing::SaeSet;

fn main() -> circuitscope::Result<()> {
    let config = ModelConfig { n_genes: 1024, ..ModelConfig::default() };
    let spec = WorldSpec { pathway_groups: 3, ..WorldSpec::default() };
    let world = SyntheticWorld::generate(&config, &spec, 1)?;
    let model = build_toy_model(&config, &world)?;
    let cells = generate_cells(&world, 400, config.seq_len, 2)?;
    let traces = model.forward_full(&cells.tokens)?;

    let train = TrainConfig { k: 4, steps: 2000, ..TrainConfig::default() };
    let mut saes = SaeSet::default();
    for layer in 0..=3 {
        saes.insert(train_sae(layer, &collect_activations(&traces, layer), &train)?.0);
    }

    println!("{:<10} {:>8} {:>10} {:>10} {:>6}", "pathway", "targets", "pairwise", "three-way", "super");
    for (i, group) in world.pathway_groups.iter().enumerate() {
        let member = |layer: usize| -> circuitscope::Result<Member> {
            Ok(Member { layer, feature: saes.get(layer)?.best_feature_for(group[layer]).0 })
        };
        let triplet = Triplet {
            pathway_tag: format!("pathway-{i}"),
            kind: TripletKind::SamePathway,
            members: [member(0)?, member(1)?, member(2)?],
        };
        let effects = run_conditions(&model, &saes, &triplet, &traces[..200], 3)?;
        let r = triplet_report(&triplet, &effects, &ReportOptions::default());
        let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<10} {:>8} {:>10} {:>10} {:>6}",
            r.pathway_tag,
            r.n_targets,
            show(r.pairwise_ratio_median),
            show(r.threeway_ratio_median),
            r.superadditive_count
        );
    }
    Ok(())
}
