// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multi-feature ablation of triplets: condition effects, redundancy ratios,
//! inclusion-exclusion interaction terms and marginal contributions.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{pool_rows, Model, ResidualTrace};
use crate::stats::median;
use crate::tracing::{encode_rows, subtract_feature, SaeSet, TargetStats};

/// One `(layer, feature)` member of an ablation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Member {
    pub layer: usize,
    pub feature: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripletKind {
    SamePathway,
    CrossPathway,
}

impl TripletKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SamePathway => "same-pathway",
            Self::CrossPathway => "cross-pathway",
        }
    }
}

impl std::str::FromStr for TripletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "same-pathway" | "same" => Ok(Self::SamePathway),
            "cross-pathway" | "cross" => Ok(Self::CrossPathway),
            other => Err(Error::Data(format!("unknown triplet type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub pathway_tag: String,
    pub kind: TripletKind,
    /// Members A, B, C.
    pub members: [Member; 3],
}

impl Triplet {
    pub fn validate(&self, measurement_layer: usize) -> Result<()> {
        if let Some(m) = self.members.iter().find(|m| m.layer >= measurement_layer) {
            return Err(Error::Config(format!(
                "triplet '{}' member at layer {} is not below measurement layer {measurement_layer}",
                self.pathway_tag, m.layer
            )));
        }
        Ok(())
    }
}

/// The seven ablation conditions, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    A,
    B,
    C,
    AB,
    AC,
    BC,
    ABC,
}

impl Condition {
    pub const ALL: [Condition; 7] = [Self::A, Self::B, Self::C, Self::AB, Self::AC, Self::BC, Self::ABC];

    /// Which of A, B, C are ablated.
    pub fn mask(self) -> [bool; 3] {
        match self {
            Self::A => [true, false, false],
            Self::B => [false, true, false],
            Self::C => [false, false, true],
            Self::AB => [true, true, false],
            Self::AC => [true, false, true],
            Self::BC => [false, true, true],
            Self::ABC => [true, true, true],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::AB => "AB",
            Self::AC => "AC",
            Self::BC => "BC",
            Self::ABC => "ABC",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Ablates `members` in one forward pass with sequential hook semantics and
/// returns the measurement-layer SAE codes, pooled over positions.
///
/// Members are applied in layer order (input order within a layer); each
/// coefficient is read from the stream as already modified by upstream members.
pub fn ablate_set(
    model: &Model,
    trace: &ResidualTrace,
    saes: &SaeSet,
    members: &[Member],
    measurement_layer: usize,
) -> Result<Vec<f64>> {
    let measure = saes.get(measurement_layer)?;
    if measurement_layer > model.n_layers() || trace.hidden.len() != model.n_layers() + 1 {
        return Err(Error::Config(format!("measurement layer {measurement_layer} outside the model")));
    }
    if let Some(m) = members.iter().find(|m| m.layer >= measurement_layer) {
        return Err(Error::Config(format!(
            "member layer {} must be below measurement layer {measurement_layer}",
            m.layer
        )));
    }
    let clean = &trace.hidden[measurement_layer];
    if members.is_empty() {
        return Ok(pool_rows(&encode_rows(measure, clean)));
    }
    let mut ordered = members.to_vec();
    ordered.sort_by_key(|m| m.layer);
    let member_saes = ordered
        .iter()
        .map(|m| {
            let sae = saes.get(m.layer)?;
            if m.feature >= sae.d_sae() {
                return Err(Error::Input(format!(
                    "feature {} out of range at layer {} (d_sae = {})",
                    m.feature,
                    m.layer,
                    sae.d_sae()
                )));
            }
            Ok(sae)
        })
        .collect::<Result<Vec<_>>>()?;
    let first = ordered[0].layer;

    let mut codes = Matrix::zeros(clean.rows(), measure.d_sae());
    let mut next = vec![0.0; model.d_model()];
    for p in 0..clean.rows() {
        let mut h = trace.hidden[first].row(p).to_vec();
        let mut touched = false;
        let mut cursor = 0;
        for layer in first..=measurement_layer {
            if layer > first && touched {
                model.block_position(layer, &h, &mut next);
                std::mem::swap(&mut h, &mut next);
            } else if layer > first {
                h.copy_from_slice(trace.hidden[layer].row(p));
            }
            while cursor < ordered.len() && ordered[cursor].layer == layer {
                let (m, sae) = (ordered[cursor], member_saes[cursor]);
                if let Some(a) = sae.encode_topk(&h).get(m.feature).filter(|&a| a != 0.0) {
                    subtract_feature(&mut h, a, sae.direction(m.feature));
                    touched = true;
                }
                cursor += 1;
            }
        }
        let row = if touched { &h[..] } else { clean.row(p) };
        for (f, v) in measure.encode_topk(row).entries {
            codes.set(p, f, v);
        }
    }
    Ok(pool_rows(&codes))
}

/// The seven condition effect sizes for one measurement-layer feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEffects {
    pub target: usize,
    /// Indexed in [`Condition::ALL`] order.
    pub d: [f64; 7],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Additivity {
    Subadditive,
    Additive,
    Superadditive,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    let r = num / den;
    (den > 0.0 && r.is_finite()).then_some(r)
}

impl TargetEffects {
    /// Builds from a condition map; every condition must be present.
    pub fn from_map(target: usize, map: &BTreeMap<Condition, f64>) -> Result<Self> {
        let mut d = [0.0; 7];
        for c in Condition::ALL {
            d[c.index()] = *map
                .get(&c)
                .ok_or_else(|| Error::Data(format!("target {target} is missing condition {}", c.label())))?;
        }
        Ok(Self { target, d })
    }

    pub fn get(&self, c: Condition) -> f64 {
        self.d[c.index()]
    }

    /// `|d_ABC| / (|d_A| + |d_B| + |d_C|)`; `None` when undefined.
    pub fn redundancy_ratio(&self) -> Option<f64> {
        use Condition::*;
        ratio(self.get(ABC).abs(), self.get(A).abs() + self.get(B).abs() + self.get(C).abs())
    }

    /// `[R_AB, R_AC, R_BC]`, each `|d_XY| / (|d_X| + |d_Y|)`.
    pub fn pairwise_ratios(&self) -> [Option<f64>; 3] {
        use Condition::*;
        let r = |xy: Condition, x: Condition, y: Condition| {
            ratio(self.get(xy).abs(), self.get(x).abs() + self.get(y).abs())
        };
        [r(AB, A, B), r(AC, A, C), r(BC, B, C)]
    }

    /// Signed inclusion-exclusion term `d_ABC - d_AB - d_AC - d_BC + d_A + d_B + d_C`.
    pub fn interaction_term(&self) -> f64 {
        use Condition::*;
        self.get(ABC) - self.get(AB) - self.get(AC) - self.get(BC) + self.get(A) + self.get(B) + self.get(C)
    }

    pub fn classify(&self, epsilon: f64) -> Option<Additivity> {
        let r = self.redundancy_ratio()?;
        Some(if r > 1.0 + epsilon {
            Additivity::Superadditive
        } else if r < 1.0 - epsilon {
            Additivity::Subadditive
        } else {
            Additivity::Additive
        })
    }

    /// `|d_ABC| - |d_AB|`: what C adds once A and B are gone.
    pub fn marginal_c_given_ab(&self) -> f64 {
        self.get(Condition::ABC).abs() - self.get(Condition::AB).abs()
    }

    pub fn is_significant(&self, threshold: f64) -> bool {
        self.d.iter().any(|d| d.abs() > threshold)
    }
}

/// Per-target condition effects of one triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEffects {
    pub measurement_layer: usize,
    pub n_cells: u64,
    pub targets: Vec<TargetEffects>,
}

/// Runs the clean baseline and all seven conditions on every cell and reports
/// Cohen's d per measurement-layer feature.
pub fn run_conditions(
    model: &Model,
    saes: &SaeSet,
    triplet: &Triplet,
    traces: &[ResidualTrace],
    measurement_layer: usize,
) -> Result<ConditionEffects> {
    if traces.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    triplet.validate(measurement_layer)?;
    let d_sae = saes.get(measurement_layer)?.d_sae();
    let per_cell: Vec<(Vec<f64>, Vec<Vec<f64>>)> = traces
        .par_iter()
        .map(|t| {
            let clean = ablate_set(model, t, saes, &[], measurement_layer)?;
            let ablated = Condition::ALL
                .iter()
                .map(|c| {
                    let set: Vec<Member> =
                        triplet.members.iter().zip(c.mask()).filter(|(_, on)| *on).map(|(m, _)| *m).collect();
                    ablate_set(model, t, saes, &set, measurement_layer)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((clean, ablated))
        })
        .collect::<Result<_>>()?;

    let mut stats = vec![[TargetStats::default(); 7]; d_sae];
    for (clean, ablated) in &per_cell {
        for (ci, abl) in ablated.iter().enumerate() {
            for t in 0..d_sae {
                stats[t][ci].push(clean[t], abl[t]);
            }
        }
    }
    let targets = stats
        .iter()
        .enumerate()
        .map(|(target, s)| {
            let mut d = [0.0; 7];
            for (slot, st) in d.iter_mut().zip(s) {
                *slot = st.cohens_d()?;
            }
            Ok(TargetEffects { target, d })
        })
        .collect::<Result<_>>()?;
    Ok(ConditionEffects { measurement_layer, n_cells: traces.len() as u64, targets })
}

/// Aggregation settings for [`triplet_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    /// A target enters the report when any condition has `|d|` above this.
    pub significance: f64,
    /// Half-width of the additive band around ratio 1.
    pub epsilon: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { significance: 0.5, epsilon: 0.05 }
    }
}

/// One row of the triplet table. Statistics are `None` when no target qualifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletReport {
    pub pathway_tag: String,
    pub kind: TripletKind,
    pub n_cells: u64,
    pub n_targets: usize,
    pub pairwise_ratio_mean: Option<f64>,
    pub pairwise_ratio_median: Option<f64>,
    pub threeway_ratio_median: Option<f64>,
    pub superadditive_count: usize,
    pub subadditive_fraction: Option<f64>,
    pub additive_fraction: Option<f64>,
    pub superadditive_fraction: Option<f64>,
    pub marginal_c_given_ab_median: Option<f64>,
}

pub fn triplet_report(triplet: &Triplet, effects: &ConditionEffects, options: &ReportOptions) -> TripletReport {
    let significant: Vec<&TargetEffects> =
        effects.targets.iter().filter(|t| t.is_significant(options.significance)).collect();
    let pairwise: Vec<f64> = significant.iter().flat_map(|t| t.pairwise_ratios()).flatten().collect();
    let threeway: Vec<f64> = significant.iter().filter_map(|t| t.redundancy_ratio()).collect();
    let classes: Vec<Additivity> = significant.iter().filter_map(|t| t.classify(options.epsilon)).collect();
    let count = |c: Additivity| classes.iter().filter(|&&x| x == c).count();
    let fraction = |c: Additivity| (!classes.is_empty()).then(|| count(c) as f64 / classes.len() as f64);
    TripletReport {
        pathway_tag: triplet.pathway_tag.clone(),
        kind: triplet.kind,
        n_cells: effects.n_cells,
        n_targets: significant.len(),
        pairwise_ratio_mean: (!pairwise.is_empty()).then(|| pairwise.iter().sum::<f64>() / pairwise.len() as f64),
        pairwise_ratio_median: median(pairwise.iter().copied()),
        threeway_ratio_median: median(threeway.iter().copied()),
        superadditive_count: count(Additivity::Superadditive),
        subadditive_fraction: fraction(Additivity::Subadditive),
        additive_fraction: fraction(Additivity::Additive),
        superadditive_fraction: fraction(Additivity::Superadditive),
        marginal_c_given_ab_median: median(significant.iter().map(|t| t.marginal_c_given_ab())),
    }
}

/// Reads `pathway_tag,type,layerA,featA,layerB,featB,layerC,featC` rows.
pub fn read_triplets_csv<R: Read>(input: R) -> Result<Vec<Triplet>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let expected = ["pathway_tag", "type", "layerA", "featA", "layerB", "featB", "layerC", "featC"];
    if reader.headers()?.iter().ne(expected) {
        return Err(Error::Data(format!("triplet CSV header must be {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != expected.len() {
            return Err(Error::Data(format!("triplet row {} has {} fields", i + 1, rec.len())));
        }
        let num = |j: usize| -> Result<usize> {
            rec[j].parse().map_err(|_| Error::Data(format!("triplet row {}: bad integer '{}'", i + 1, &rec[j])))
        };
        let member = |j: usize| -> Result<Member> { Ok(Member { layer: num(j)?, feature: num(j + 1)? }) };
        out.push(Triplet {
            pathway_tag: rec[0].to_string(),
            kind: rec[1].parse()?,
            members: [member(2)?, member(4)?, member(6)?],
        });
    }
    Ok(out)
}

pub fn write_triplets_csv<W: Write>(triplets: &[Triplet], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pathway_tag", "type", "layerA", "featA", "layerB", "featB", "layerC", "featC"])?;
    for t in triplets {
        let mut rec = vec![t.pathway_tag.clone(), t.kind.as_str().to_string()];
        for m in &t.members {
            rec.push(m.layer.to_string());
            rec.push(m.feature.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes report rows as CSV, with a leading `#` provenance line.
pub fn write_reports_csv<W: Write>(reports: &[TripletReport], provenance: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {provenance}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "pathway_tag",
        "type",
        "n_cells",
        "n_targets",
        "pairwise_ratio_mean",
        "pairwise_ratio_median",
        "threeway_ratio_median",
        "superadditive_count",
        "subadditive_fraction",
        "additive_fraction",
        "superadditive_fraction",
        "marginal_c_given_ab_median",
    ])?;
    for r in reports {
        w.write_record([
            r.pathway_tag.clone(),
            r.kind.as_str().to_string(),
            r.n_cells.to_string(),
            r.n_targets.to_string(),
            opt(r.pairwise_ratio_mean),
            opt(r.pairwise_ratio_median),
            opt(r.threeway_ratio_median),
            r.superadditive_count.to_string(),
            opt(r.subadditive_fraction),
            opt(r.additive_fraction),
            opt(r.superadditive_fraction),
            opt(r.marginal_c_given_ab_median),
        ])?;
    }
    w.flush()?;
    Ok(())
}
