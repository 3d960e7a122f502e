// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exhaustive causal circuit tracing.
//!
//! A clean cache is built once per cell batch. Each source feature is then
//! zeroed in the source-layer stream, the affected positions are re-run
//! downstream, and the change in every downstream SAE feature is summarized
//! by Cohen's d and a sign-consistency score.

mod cache;
mod graph;
mod trace;

pub(crate) use cache::encode_rows;
pub use cache::{ablate_feature, encode_pooled, subtract_feature, CachedCell, CleanCache, SaeSet};
pub use graph::{Edge, EdgeGraph, GraphProvenance, TraceSummary};
pub use trace::{trace_exhaustive, trace_feature, FeatureTrace, TargetStats, Thresholds, TraceOptions};
