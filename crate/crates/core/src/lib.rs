// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod analysis;
pub mod combinatorics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod sae;
pub mod stats;
pub mod steering;
pub mod tracing;

pub use error::{Error, Result};

/// Crate version embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
