// SPDX-License-Identifier: MIT OR Apache-2.0

//! Feature amplification in early-pseudotime cells and the resulting shift
//! along the early-to-late expression axis.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, cosine, normalize};
use crate::model::{Model, ResidualTrace};
use crate::sae::SaeParams;

/// One feature to steer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerSpec {
    pub layer: usize,
    pub feature: usize,
    pub label: String,
    pub alphas: Vec<f64>,
    pub early_fraction: f64,
    pub decile: f64,
    /// Effect size carried through from the study that nominated the feature.
    pub switch_d: Option<f64>,
}

impl SteerSpec {
    pub fn new(layer: usize, feature: usize, label: impl Into<String>) -> Self {
        Self {
            layer,
            feature,
            label: label.into(),
            alphas: vec![2.0, 5.0],
            early_fraction: 0.3,
            decile: 0.1,
            switch_d: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Config(format!("steer '{}': alphas must be positive", self.label)));
        }
        for (name, v) in [("early_fraction", self.early_fraction), ("decile", self.decile)] {
            if !(v > 0.0 && v <= 0.5) {
                return Err(Error::Config(format!("steer '{}': {name} must lie in (0, 0.5]", self.label)));
            }
        }
        Ok(())
    }
}

/// Unit-norm mean logit vectors of the latest and earliest cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignaturePair {
    pub g_late: Vec<f64>,
    pub g_early: Vec<f64>,
}

/// Cell ids ordered by `(pseudotime, id)`.
fn by_pseudotime(pseudotime: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..pseudotime.len()).collect();
    ids.sort_by(|&a, &b| pseudotime[a].total_cmp(&pseudotime[b]).then(a.cmp(&b)));
    ids
}

/// Mean logits of the top and bottom `floor(decile * n)` cells by pseudotime.
///
/// Ties at a boundary go to the lower cell id, on both ends.
pub fn compute_signatures(pseudotime: &[f64], logits: &[Vec<f64>], decile: f64) -> Result<SignaturePair> {
    if pseudotime.len() != logits.len() {
        return Err(Error::Data(format!("{} pseudotimes for {} logit vectors", pseudotime.len(), logits.len())));
    }
    let n = pseudotime.len();
    let count = (decile * n as f64).floor() as usize;
    if count == 0 {
        return Err(Error::InsufficientData { needed: (1.0 / decile).ceil() as u64, got: n as u64 });
    }
    let asc = by_pseudotime(pseudotime);
    let mut desc: Vec<usize> = (0..n).collect();
    desc.sort_by(|&a, &b| pseudotime[b].total_cmp(&pseudotime[a]).then(a.cmp(&b)));
    let mean = |ids: &[usize]| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; logits[0].len()];
        for &i in ids {
            axpy(1.0, &logits[i], &mut acc);
        }
        acc.iter_mut().for_each(|v| *v /= ids.len() as f64);
        if !normalize(&mut acc) {
            return Err(Error::Numeric("signature has zero norm".into()));
        }
        Ok(acc)
    };
    Ok(SignaturePair { g_late: mean(&desc[..count])?, g_early: mean(&asc[..count])? })
}

/// Cells in the bottom `floor(early_fraction * n)` by `(pseudotime, id)` where
/// the feature is active; ascending ids.
pub fn select_early_cells(pseudotime: &[f64], active: &[bool], early_fraction: f64) -> Vec<usize> {
    let count = (early_fraction * pseudotime.len() as f64).floor() as usize;
    let mut ids: Vec<usize> = by_pseudotime(pseudotime)
        .into_iter()
        .take(count)
        .filter(|&i| active.get(i).copied().unwrap_or(false))
        .collect();
    ids.sort_unstable();
    ids
}

/// Whether `feature` has a nonzero TopK coefficient at any position of `hidden`.
pub fn feature_active(sae: &SaeParams, hidden: &crate::linalg::Matrix, feature: usize) -> bool {
    (0..hidden.rows()).any(|p| sae.encode_topk(hidden.row(p)).get(feature).is_some_and(|a| a != 0.0))
}

/// Logits after `h' = h + (alpha - 1) a_f d_f` at every position where the
/// clean coefficient `a_f` is nonzero.
pub fn steer_feature(
    model: &Model,
    sae: &SaeParams,
    trace: &ResidualTrace,
    feature: usize,
    alpha: f64,
) -> Result<Vec<f64>> {
    let layer = sae.layer;
    if layer >= model.n_layers() {
        return Err(Error::Config(format!("cannot steer at layer {layer}: no downstream block")));
    }
    if feature >= sae.d_sae() {
        return Err(Error::Input(format!("feature {feature} out of range (d_sae = {})", sae.d_sae())));
    }
    let mut hidden = trace.hidden[layer].clone();
    let direction = sae.direction(feature);
    for p in 0..hidden.rows() {
        if let Some(a) = sae.encode_topk(hidden.row(p)).get(feature).filter(|&a| a != 0.0) {
            axpy((alpha - 1.0) * a, direction, hidden.row_mut(p));
        }
    }
    Ok(model.forward_from_layer(layer, &hidden)?.logits)
}

/// `cos(z', g_late) - cos(z', g_early) - [cos(z, g_late) - cos(z, g_early)]`.
pub fn state_shift(z: &[f64], z_steered: &[f64], signatures: &SignaturePair) -> Result<f64> {
    let cos = |a: &[f64], b: &[f64]| cosine(a, b).ok_or_else(|| Error::Numeric("zero-norm logit vector".into()));
    let late = cos(z_steered, &signatures.g_late)? - cos(z_steered, &signatures.g_early)?;
    let base = cos(z, &signatures.g_late)? - cos(z, &signatures.g_early)?;
    Ok(late - base)
}

/// Result of steering one feature at one amplification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringOutcome {
    pub label: String,
    pub layer: usize,
    pub feature: usize,
    pub alpha: f64,
    pub switch_d: Option<f64>,
    /// Steered cell ids, ascending.
    pub cells: Vec<usize>,
    pub delta_s: Vec<f64>,
    pub mean_shift: Option<f64>,
    pub fraction_positive: Option<f64>,
    /// Mean logit change per gene across steered cells.
    pub gene_deltas: Vec<f64>,
    pub top_up_genes: Vec<(usize, f64)>,
    pub top_down_genes: Vec<(usize, f64)>,
}

const TOP_GENES: usize = 10;

/// Steers `spec.feature` in the selected early cells at every alpha.
///
/// `traces` must be clean full passes indexed by cell id, matching `pseudotime`.
pub fn steering_report(
    model: &Model,
    sae: &SaeParams,
    spec: &SteerSpec,
    traces: &[ResidualTrace],
    pseudotime: &[f64],
    signatures: &SignaturePair,
) -> Result<Vec<SteeringOutcome>> {
    spec.validate()?;
    if sae.layer != spec.layer {
        return Err(Error::Config(format!("SAE is for layer {}, spec asks for {}", sae.layer, spec.layer)));
    }
    if traces.len() != pseudotime.len() {
        return Err(Error::Data(format!("{} traces for {} pseudotimes", traces.len(), pseudotime.len())));
    }
    let active: Vec<bool> =
        traces.par_iter().map(|t| feature_active(sae, &t.hidden[spec.layer], spec.feature)).collect();
    let cells = select_early_cells(pseudotime, &active, spec.early_fraction);
    let n_genes = model.config.n_genes;

    spec.alphas
        .iter()
        .map(|&alpha| {
            let per_cell: Vec<(f64, Vec<f64>)> = cells
                .par_iter()
                .map(|&c| {
                    let t = &traces[c];
                    let steered = steer_feature(model, sae, t, spec.feature, alpha)?;
                    let ds = state_shift(&t.logits, &steered, signatures)?;
                    let delta: Vec<f64> = steered.iter().zip(&t.logits).map(|(a, b)| a - b).collect();
                    Ok((ds, delta))
                })
                .collect::<Result<_>>()?;
            let delta_s: Vec<f64> = per_cell.iter().map(|(d, _)| *d).collect();
            let mut gene_deltas = vec![0.0; n_genes];
            for (_, delta) in &per_cell {
                axpy(1.0, delta, &mut gene_deltas);
            }
            let n = per_cell.len();
            if n > 0 {
                gene_deltas.iter_mut().for_each(|v| *v /= n as f64);
            }
            let mut ranked: Vec<(usize, f64)> = gene_deltas.iter().copied().enumerate().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let top_up = if n > 0 { ranked.iter().take(TOP_GENES).copied().collect() } else { Vec::new() };
            ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let top_down = if n > 0 { ranked.iter().take(TOP_GENES).copied().collect() } else { Vec::new() };
            Ok(SteeringOutcome {
                label: spec.label.clone(),
                layer: spec.layer,
                feature: spec.feature,
                alpha,
                switch_d: spec.switch_d,
                cells: cells.clone(),
                mean_shift: (n > 0).then(|| delta_s.iter().sum::<f64>() / n as f64),
                fraction_positive: (n > 0).then(|| delta_s.iter().filter(|&&d| d > 0.0).count() as f64 / n as f64),
                delta_s,
                gene_deltas,
                top_up_genes: top_up,
                top_down_genes: top_down,
            })
        })
        .collect()
}

/// Reads `layer,feature,label,switch_d` rows (empty `switch_d` allowed).
pub fn read_steer_specs_csv<R: Read>(input: R) -> Result<Vec<SteerSpec>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let expected = ["layer", "feature", "label", "switch_d"];
    if reader.headers()?.iter().ne(expected) {
        return Err(Error::Data(format!("steer CSV header must be {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Data(format!("steer row {}: bad {what}", i + 1));
        if rec.len() != expected.len() {
            return Err(bad("field count"));
        }
        let mut spec = SteerSpec::new(
            rec[0].parse().map_err(|_| bad("layer"))?,
            rec[1].parse().map_err(|_| bad("feature"))?,
            &rec[2],
        );
        spec.switch_d = if rec[3].is_empty() { None } else { Some(rec[3].parse().map_err(|_| bad("switch_d"))?) };
        out.push(spec);
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Summary table, one row per (feature, alpha), after a `#` provenance line.
pub fn write_outcomes_csv<W: Write>(outcomes: &[SteeringOutcome], provenance: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {provenance}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "label",
        "layer",
        "feature",
        "switch_d",
        "alpha",
        "n_cells",
        "shift_x1e3",
        "fraction_positive",
        "top_gene_up",
        "top_gene_down",
    ])?;
    for o in outcomes {
        w.write_record([
            o.label.clone(),
            o.layer.to_string(),
            o.feature.to_string(),
            opt(o.switch_d),
            o.alpha.to_string(),
            o.cells.len().to_string(),
            opt(o.mean_shift.map(|m| m * 1e3)),
            opt(o.fraction_positive),
            o.top_up_genes.first().map_or_else(String::new, |g| g.0.to_string()),
            o.top_down_genes.first().map_or_else(String::new, |g| g.0.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-cell shifts as JSON lines.
pub fn write_cell_shifts_jsonl<W: Write>(outcomes: &[SteeringOutcome], mut out: W) -> Result<()> {
    for o in outcomes {
        for (&cell, &ds) in o.cells.iter().zip(&o.delta_s) {
            let line = serde_json::json!({
                "label": o.label, "layer": o.layer, "feature": o.feature,
                "alpha": o.alpha, "cell": cell, "delta_s": ds,
            });
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Long-format gene delta table: `label,alpha,gene,mean_logit_delta`.
pub fn write_gene_deltas_csv<W: Write>(outcomes: &[SteeringOutcome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "alpha", "gene", "mean_logit_delta"])?;
    for o in outcomes {
        for (g, d) in o.gene_deltas.iter().enumerate() {
            w.write_record([o.label.clone(), o.alpha.to_string(), g.to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
