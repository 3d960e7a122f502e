// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::trace::Thresholds;
use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter, EDGES_MAGIC};
use crate::stats::median;

/// A significant causal link from a source feature to a downstream feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source_feature: usize,
    pub target_layer: usize,
    pub target_feature: usize,
    pub cohens_d: f64,
    pub consistency: f64,
    pub n_cells: u64,
}

/// Settings a graph was produced under.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphProvenance {
    pub config_hash: String,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub source_layer: usize,
    pub downstream_layers: Vec<usize>,
    pub n_cells: u64,
}

/// Edge list in canonical `(source_feature, target_layer, target_feature)` order,
/// plus the set of features that were traced (including those with no edges).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGraph {
    pub edges: Vec<Edge>,
    pub traced_features: Vec<usize>,
    pub provenance: GraphProvenance,
}

/// Totals over a traced graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub features_traced: usize,
    pub total_edges: usize,
    pub mean_edges_per_feature: f64,
    pub median_edges_per_feature: f64,
    pub max_edges_per_feature: usize,
    pub zero_edge_features: usize,
    /// Edge counts keyed by downstream layer.
    pub per_layer: BTreeMap<usize, usize>,
    pub provenance: GraphProvenance,
    pub tool_version: String,
}

const CSV_HEADER: [&str; 6] =
    ["source_feature", "target_layer", "target_feature", "cohens_d", "consistency", "n_cells"];

impl EdgeGraph {
    /// Edge count for each traced feature, zeros included.
    pub fn counts_per_feature(&self) -> BTreeMap<usize, usize> {
        let mut counts: BTreeMap<usize, usize> = self.traced_features.iter().map(|&f| (f, 0)).collect();
        for e in &self.edges {
            *counts.entry(e.source_feature).or_default() += 1;
        }
        counts
    }

    pub fn summary(&self) -> TraceSummary {
        let counts = self.counts_per_feature();
        let n = counts.len();
        let total = self.edges.len();
        let mut per_layer: BTreeMap<usize, usize> = self.provenance.downstream_layers.iter().map(|&l| (l, 0)).collect();
        for e in &self.edges {
            *per_layer.entry(e.target_layer).or_default() += 1;
        }
        TraceSummary {
            features_traced: n,
            total_edges: total,
            mean_edges_per_feature: if n == 0 { 0.0 } else { total as f64 / n as f64 },
            median_edges_per_feature: median(counts.values().map(|&c| c as f64)).unwrap_or(0.0),
            max_edges_per_feature: counts.values().copied().max().unwrap_or(0),
            zero_edge_features: counts.values().filter(|&&c| c == 0).count(),
            per_layer,
            provenance: self.provenance.clone(),
            tool_version: crate::VERSION.to_string(),
        }
    }

    /// CSV with a leading `#` provenance line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# provenance {} version={}", serde_json::to_string(&self.provenance)?, crate::VERSION)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for e in &self.edges {
            w.write_record([
                e.source_feature.to_string(),
                e.target_layer.to_string(),
                e.target_feature.to_string(),
                e.cohens_d.to_string(),
                e.consistency.to_string(),
                e.n_cells.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads edges back from [`EdgeGraph::write_csv`] output. The traced feature
    /// set is recovered from the edges, so zero-edge features are lost unless
    /// `traced_features` is supplied.
    pub fn read_csv<R: Read>(input: R, traced_features: Option<Vec<usize>>) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut provenance = None;
        let mut body = String::new();
        let mut line = String::new();
        while reader.read_line(&mut line)? > 0 {
            if let Some(rest) = line.trim_end().strip_prefix("# provenance ") {
                let json = rest.rsplit_once(" version=").map_or(rest, |(j, _)| j);
                provenance = Some(serde_json::from_str::<GraphProvenance>(json)?);
            } else if !line.starts_with('#') {
                body.push_str(&line);
            }
            line.clear();
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        if r.headers()?.iter().ne(CSV_HEADER) {
            return Err(Error::Data(format!("unexpected edge CSV header {:?}", r.headers()?)));
        }
        let mut edges = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Data(format!("short edge record {rec:?}")));
            let int = |i: usize| -> Result<usize> {
                field(i)?.parse().map_err(|_| Error::Data(format!("bad integer in edge record {rec:?}")))
            };
            let real = |i: usize| -> Result<f64> {
                field(i)?.parse().map_err(|_| Error::Data(format!("bad number in edge record {rec:?}")))
            };
            edges.push(Edge {
                source_feature: int(0)?,
                target_layer: int(1)?,
                target_feature: int(2)?,
                cohens_d: real(3)?,
                consistency: real(4)?,
                n_cells: int(5)? as u64,
            });
        }
        let provenance = provenance.unwrap_or_else(|| GraphProvenance {
            config_hash: String::new(),
            seed: 0,
            thresholds: Thresholds::default(),
            source_layer: 0,
            downstream_layers: {
                let mut l: Vec<usize> = edges.iter().map(|e| e.target_layer).collect();
                l.sort_unstable();
                l.dedup();
                l
            },
            n_cells: edges.first().map_or(0, |e| e.n_cells),
        });
        Ok(Self::from_edges(edges, traced_features, provenance))
    }

    /// Builds a graph in canonical order from edges in any order.
    pub fn from_edges(mut edges: Vec<Edge>, traced_features: Option<Vec<usize>>, provenance: GraphProvenance) -> Self {
        edges.sort_by_key(|e| (e.source_feature, e.target_layer, e.target_feature));
        let mut traced = traced_features.unwrap_or_default();
        traced.extend(edges.iter().map(|e| e.source_feature));
        traced.sort_unstable();
        traced.dedup();
        Self { edges, traced_features: traced, provenance }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.provenance;
        let mut w = BinWriter::new(EDGES_MAGIC, &format!("{} version={}", p.config_hash, crate::VERSION));
        w.str(&p.config_hash);
        w.u64(p.seed);
        w.f64(p.thresholds.d);
        w.f64(p.thresholds.consistency);
        w.f64(p.thresholds.frequency);
        w.usize(p.source_layer);
        w.usize(p.downstream_layers.len());
        p.downstream_layers.iter().for_each(|&l| w.usize(l));
        w.u64(p.n_cells);
        w.usize(self.traced_features.len());
        self.traced_features.iter().for_each(|&f| w.usize(f));
        w.usize(self.edges.len());
        for e in &self.edges {
            w.usize(e.source_feature);
            w.usize(e.target_layer);
            w.usize(e.target_feature);
            w.f64(e.cohens_d);
            w.f64(e.consistency);
            w.u64(e.n_cells);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = BinReader::new(bytes, EDGES_MAGIC)?;
        let config_hash = r.str()?;
        let seed = r.u64()?;
        let thresholds = Thresholds { d: r.f64()?, consistency: r.f64()?, frequency: r.f64()? };
        let source_layer = r.usize()?;
        let n_layers = r.usize()?;
        let downstream_layers = (0..n_layers).map(|_| r.usize()).collect::<Result<_>>()?;
        let n_cells = r.u64()?;
        let n_traced = r.usize()?;
        let traced_features = (0..n_traced).map(|_| r.usize()).collect::<Result<_>>()?;
        let n_edges = r.usize()?;
        let mut edges = Vec::with_capacity(n_edges.min(1 << 20));
        for _ in 0..n_edges {
            edges.push(Edge {
                source_feature: r.usize()?,
                target_layer: r.usize()?,
                target_feature: r.usize()?,
                cohens_d: r.f64()?,
                consistency: r.f64()?,
                n_cells: r.u64()?,
            });
        }
        r.expect_end()?;
        Ok(Self {
            edges,
            traced_features,
            provenance: GraphProvenance { config_hash, seed, thresholds, source_layer, downstream_layers, n_cells },
        })
    }
}
