// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic ground truth: which residual directions genes load on, which
//! directions the model's blocks wire together, and how gene usage drifts
//! with pseudotime.
//!
//! Residual directions are standard basis vectors and are allocated in a
//! fixed order: the maturity direction, then pathway directions (three per
//! group), then "content" directions that genes load on, then scratch
//! directions that only planted edges write into.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};

/// A planted causal link: block `target_layer` adds `strength * h[source_direction]`
/// into `target_direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub source_layer: usize,
    pub source_direction: usize,
    pub target_layer: usize,
    pub target_direction: usize,
    pub strength: f64,
    /// Clear the target direction again in the next block, so the write is
    /// only visible at `target_layer`.
    pub transient: bool,
}

/// A direction at `layer` whose amplification is wired onto the maturity direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerPlant {
    pub layer: usize,
    pub direction: usize,
    /// +1 pushes toward maturity, -1 away from it.
    pub sign: f64,
}

/// Recipe for [`SyntheticWorld::generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    /// Directions that genes load on (besides maturity and pathways).
    pub content_directions: usize,
    /// Expected number of content directions per gene.
    pub directions_per_gene: f64,
    /// Loading of late (+) and early (-) genes on the maturity direction.
    pub maturity_loading: f64,
    /// Log-odds slope of late-vs-early gene usage across pseudotime.
    pub maturity_gradient: f64,
    /// Layer whose directions feed the planted tracing edges.
    pub source_layer: usize,
    /// Number of planted edges into `source_layer + 1`, `source_layer + 2`, ...
    pub edges_per_target_layer: Vec<usize>,
    pub edge_strength: f64,
    pub transient_targets: bool,
    /// Erase each content direction one block after its last planted target layer.
    pub fade_sources: bool,
    /// Content directions that fan out to `hub_fanout` targets in every downstream layer.
    pub hubs: usize,
    pub hub_fanout: usize,
    /// Pathways carrying one signal copied across layers 0, 1 and 2.
    pub pathway_groups: usize,
    pub pathway_gene_fraction: f64,
    /// Downstream readouts written from each pathway at block 3.
    pub pathway_readouts: usize,
    pub pathway_strength: f64,
    /// `(layer, sign)` pairs; each gets its own content direction.
    pub steer_plants: Vec<(usize, f64)>,
    pub steer_strength: f64,
    /// Probability that a content or pathway direction carries a label.
    pub annotation_rate: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            content_directions: 24,
            directions_per_gene: 3.0,
            maturity_loading: 0.5,
            maturity_gradient: 3.0,
            source_layer: 2,
            edges_per_target_layer: Vec::new(),
            edge_strength: 2.0,
            transient_targets: true,
            fade_sources: false,
            hubs: 0,
            hub_fanout: 0,
            pathway_groups: 0,
            pathway_gene_fraction: 0.15,
            pathway_readouts: 2,
            pathway_strength: 2.0,
            steer_plants: Vec::new(),
            steer_strength: 2.0,
            annotation_rate: 0.5,
        }
    }
}

impl WorldSpec {
    /// No planted structure at all.
    pub fn unplanted() -> Self {
        Self::default()
    }

    /// 24 planted edges from layer 2 into layers 3, 4, 5 with decaying counts.
    pub fn decaying() -> Self {
        Self { content_directions: 32, edges_per_target_layer: vec![16, 10, 4], fade_sources: true, ..Self::default() }
    }

    /// 24 planted edges (12/8/4 across the three layers after the source layer).
    pub fn planted_circuit() -> Self {
        Self { edges_per_target_layer: vec![12, 8, 4], ..Self::decaying() }
    }
}

/// Ground truth the toy model is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub d_model: usize,
    pub n_genes: usize,
    pub n_layers: usize,
    pub maturity_direction: usize,
    /// Unit vector over genes; equals the logit-space image of the maturity direction.
    pub maturity_axis: Vec<f64>,
    /// Per gene: -1 early, 0 neutral, +1 late.
    pub gene_maturity: Vec<f64>,
    pub maturity_gradient: f64,
    /// Sparse embedding of each gene: `(direction, weight)`.
    pub gene_loadings: Vec<Vec<(usize, f64)>>,
    pub content_directions: Vec<usize>,
    pub planted_edges: Vec<PlantedEdge>,
    /// Each group lists directions carrying copies of one signal, in layer order.
    pub pathway_groups: Vec<Vec<usize>>,
    pub steer_plants: Vec<SteerPlant>,
    /// `(direction, block)`: the block that erases the direction from the stream.
    pub fades: Vec<(usize, usize)>,
    pub annotations: BTreeMap<usize, String>,
}

struct Allocator {
    next: usize,
    limit: usize,
}

impl Allocator {
    fn take(&mut self, n: usize, what: &str) -> Result<Vec<usize>> {
        if self.next + n > self.limit {
            return Err(Error::Config(format!(
                "world needs more residual directions than d_model = {} (while allocating {what})",
                self.limit
            )));
        }
        let out = (self.next..self.next + n).collect();
        self.next += n;
        Ok(out)
    }
}

impl SyntheticWorld {
    /// Builds a world for `config` from `spec`, deterministic in `seed`.
    pub fn generate(config: &ModelConfig, spec: &WorldSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        let n_layers = config.n_layers;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5745_4f52_4c44);
        let mut alloc = Allocator { next: 0, limit: config.d_model };

        let maturity_direction = alloc.take(1, "maturity")?[0];
        let mut pathway_groups = Vec::with_capacity(spec.pathway_groups);
        for _ in 0..spec.pathway_groups {
            pathway_groups.push(alloc.take(3, "pathways")?);
        }
        let content = alloc.take(spec.content_directions, "content directions")?;
        if content.is_empty() {
            return Err(Error::Config("content_directions must be >= 1".into()));
        }

        let mut planted_edges = Vec::new();
        let mut sources = content.clone();
        sources.shuffle(&mut rng);
        let mut hub_sources = Vec::new();
        if spec.hubs > 0 {
            if spec.hubs > sources.len() {
                return Err(Error::Config("more hubs than content directions".into()));
            }
            hub_sources = sources.drain(..spec.hubs).collect();
            sources.extend(hub_sources.iter().copied());
        }
        let n_targets = spec.edges_per_target_layer.len();
        if n_targets > 0 || spec.hubs > 0 {
            let last = spec.source_layer + n_targets.max(1);
            if last > n_layers {
                return Err(Error::Config(format!(
                    "planted edges from layer {} reach layer {last} > n_layers = {n_layers}",
                    spec.source_layer
                )));
            }
        }
        let mut cursor = 0usize;
        for (offset, &count) in spec.edges_per_target_layer.iter().enumerate() {
            let target_layer = spec.source_layer + 1 + offset;
            for target in alloc.take(count, "planted edge targets")? {
                let source = sources[cursor % sources.len()];
                cursor += 1;
                planted_edges.push(PlantedEdge {
                    source_layer: spec.source_layer,
                    source_direction: source,
                    target_layer,
                    target_direction: target,
                    strength: spec.edge_strength,
                    transient: spec.transient_targets,
                });
            }
        }
        let hub_layers = n_targets.max(1);
        for &hub in &hub_sources {
            for offset in 0..hub_layers {
                for target in alloc.take(spec.hub_fanout, "hub targets")? {
                    planted_edges.push(PlantedEdge {
                        source_layer: spec.source_layer,
                        source_direction: hub,
                        target_layer: spec.source_layer + 1 + offset,
                        target_direction: target,
                        strength: spec.edge_strength,
                        transient: spec.transient_targets,
                    });
                }
            }
        }

        if !pathway_groups.is_empty() && n_layers < 4 {
            return Err(Error::Config("pathway groups need n_layers >= 4".into()));
        }
        for group in &pathway_groups {
            let (p1, p2, p3) = (group[0], group[1], group[2]);
            planted_edges.push(copy_edge(0, p1, 1, p2));
            planted_edges.push(copy_edge(1, p1, 2, p3));
            for target in alloc.take(spec.pathway_readouts, "pathway readouts")? {
                planted_edges.push(PlantedEdge {
                    source_layer: 2,
                    source_direction: p3,
                    target_layer: 3,
                    target_direction: target,
                    strength: spec.pathway_strength,
                    transient: false,
                });
            }
        }

        let mut steer_pool = content.clone();
        steer_pool.shuffle(&mut rng);
        let mut steer_plants = Vec::new();
        for (i, &(layer, sign)) in spec.steer_plants.iter().enumerate() {
            if layer >= n_layers {
                return Err(Error::Config(format!("steer plant layer {layer} >= n_layers")));
            }
            let direction = steer_pool[i % steer_pool.len()];
            let sign = if sign < 0.0 { -1.0 } else { 1.0 };
            planted_edges.push(PlantedEdge {
                source_layer: layer,
                source_direction: direction,
                target_layer: layer + 1,
                target_direction: maturity_direction,
                strength: sign * spec.steer_strength,
                transient: false,
            });
            steer_plants.push(SteerPlant { layer, direction, sign });
        }

        // Gene embeddings.
        let mut fades = Vec::new();
        if spec.fade_sources {
            for &d in &content {
                if steer_plants.iter().any(|p| p.direction == d) {
                    continue;
                }
                let last = planted_edges
                    .iter()
                    .filter(|e| e.source_direction == d)
                    .map(|e| e.target_layer)
                    .max()
                    .unwrap_or(spec.source_layer);
                if last < n_layers {
                    fades.push((d, last + 1));
                }
            }
        }

        let n_genes = config.n_genes;
        let p_content = (spec.directions_per_gene / content.len() as f64).clamp(0.0, 1.0);
        let mut gene_maturity = Vec::with_capacity(n_genes);
        let mut gene_loadings = Vec::with_capacity(n_genes);
        for g in 0..n_genes {
            let m = match g % 3 {
                0 => -1.0,
                1 => 0.0,
                _ => 1.0,
            };
            gene_maturity.push(m);
            let mut loads = Vec::new();
            if m != 0.0 {
                loads.push((maturity_direction, m * spec.maturity_loading));
            }
            for group in &pathway_groups {
                if rng.random::<f64>() < spec.pathway_gene_fraction {
                    loads.push((group[0], 1.0));
                }
            }
            for &d in &content {
                if rng.random::<f64>() < p_content {
                    loads.push((d, rng.random_range(0.6..1.4)));
                }
            }
            gene_loadings.push(loads);
        }

        let mut annotations = BTreeMap::new();
        for (g, group) in pathway_groups.iter().enumerate() {
            for &d in group {
                if rng.random::<f64>() < spec.annotation_rate {
                    annotations.insert(d, format!("pathway-{g}"));
                }
            }
        }
        for &d in &content {
            if rng.random::<f64>() < spec.annotation_rate {
                annotations.insert(d, format!("program-{d}"));
            }
        }

        let mut maturity_axis = gene_maturity.clone();
        crate::linalg::normalize(&mut maturity_axis);

        let world = Self {
            d_model: config.d_model,
            n_genes,
            n_layers,
            maturity_direction,
            maturity_axis,
            gene_maturity,
            maturity_gradient: spec.maturity_gradient,
            gene_loadings,
            content_directions: content,
            planted_edges,
            pathway_groups,
            steer_plants,
            fades,
            annotations,
        };
        world.check_against(config)?;
        Ok(world)
    }

    /// Verifies the world fits `config` (direction indices, layers, gene count).
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        if self.d_model != config.d_model || self.n_genes != config.n_genes {
            return Err(Error::Config(format!(
                "world built for d_model={}, n_genes={} but model has d_model={}, n_genes={}",
                self.d_model, self.n_genes, config.d_model, config.n_genes
            )));
        }
        if self.gene_loadings.len() != config.n_genes || self.gene_maturity.len() != config.n_genes {
            return Err(Error::Config("gene tables do not match n_genes".into()));
        }
        for e in &self.planted_edges {
            if e.source_direction >= config.d_model || e.target_direction >= config.d_model {
                return Err(Error::Config(format!("planted edge direction out of range: {e:?}")));
            }
            if e.target_layer == 0 || e.target_layer > config.n_layers || e.source_layer >= e.target_layer {
                return Err(Error::Config(format!("planted edge layers invalid: {e:?}")));
            }
            if e.strength == 0.0 || !e.strength.is_finite() {
                return Err(Error::Config(format!("planted edge strength must be nonzero: {e:?}")));
            }
        }
        for loads in &self.gene_loadings {
            if loads.iter().any(|&(d, _)| d >= config.d_model) {
                return Err(Error::Config("gene loading direction out of range".into()));
            }
        }
        if self.fades.iter().any(|&(d, b)| d >= config.d_model || b == 0 || b > config.n_layers) {
            return Err(Error::Config("fade entry out of range".into()));
        }
        if self.pathway_groups.iter().any(|g| g.len() < 3) {
            return Err(Error::Config("pathway groups need >= 3 members".into()));
        }
        Ok(())
    }

    /// Planted edges that are tracing targets (excludes pathway copies and steering wiring).
    pub fn tracing_edges(&self) -> impl Iterator<Item = &PlantedEdge> {
        let maturity = self.maturity_direction;
        let pathway: Vec<usize> = self.pathway_groups.iter().flatten().copied().collect();
        self.planted_edges
            .iter()
            .filter(move |e| e.target_direction != maturity && !pathway.contains(&e.source_direction))
    }
}

fn copy_edge(source_layer: usize, source: usize, target_layer: usize, target: usize) -> PlantedEdge {
    PlantedEdge {
        source_layer,
        source_direction: source,
        target_layer,
        target_direction: target,
        strength: 1.0,
        transient: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_circuit_world_has_24_edges() {
        let cfg = ModelConfig { d_model: 64, ..Default::default() };
        let w = SyntheticWorld::generate(&cfg, &WorldSpec::planted_circuit(), 1).unwrap();
        assert_eq!(w.tracing_edges().count(), 24);
        let per_layer: Vec<usize> =
            (3..=5).map(|l| w.planted_edges.iter().filter(|e| e.target_layer == l).count()).collect();
        assert_eq!(per_layer, vec![12, 8, 4]);
        assert!(w.fades.iter().all(|&(_, b)| b > 2));
    }

    #[test]
    fn too_many_directions_is_config_error() {
        let cfg = ModelConfig { d_model: 16, n_genes: 64, ..Default::default() };
        let spec = WorldSpec { content_directions: 40, ..Default::default() };
        assert!(matches!(SyntheticWorld::generate(&cfg, &spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn pathway_groups_have_three_members() {
        let cfg = ModelConfig::default();
        let spec = WorldSpec { pathway_groups: 2, ..Default::default() };
        let w = SyntheticWorld::generate(&cfg, &spec, 3).unwrap();
        assert_eq!(w.pathway_groups.len(), 2);
        assert!(w.pathway_groups.iter().all(|g| g.len() == 3));
    }

    #[test]
    fn maturity_axis_is_unit() {
        let w = SyntheticWorld::generate(&ModelConfig::default(), &WorldSpec::default(), 0).unwrap();
        assert!((crate::linalg::norm(&w.maturity_axis) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_world() {
        let cfg = ModelConfig::default();
        let a = SyntheticWorld::generate(&cfg, &WorldSpec::decaying(), 9).unwrap();
        let b = SyntheticWorld::generate(&cfg, &WorldSpec::decaying(), 9).unwrap();
        assert_eq!(a, b);
    }
}
