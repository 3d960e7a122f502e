// SPDX-License-Identifier: MIT OR Apache-2.0

//! Toy residual-stream model and the synthetic world it is built from.

mod cells;
mod config;
mod net;
mod world;

pub use cells::{generate_cells, CellBatch};
pub use config::ModelConfig;
pub use net::{build_toy_model, pool_rows, Block, Model, PartialTrace, RankOne, ResidualTrace};
pub use world::{PlantedEdge, SteerPlant, SyntheticWorld, WorldSpec};
