// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration and the end-to-end commands behind the CLI.
//!
//! Every command reads its inputs from and writes its outputs to `out_dir`.
//! Outputs are written atomically, refuse to overwrite without `force`, and
//! embed a stamp with the config hash and tool version.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, AnalysisOptions, AnalysisReport};
use crate::combinatorics::{self, Member, ReportOptions, Triplet, TripletKind, TripletReport};
use crate::error::{Error, Result};
use crate::io::{self, write_atomic};
use crate::model::{build_toy_model, generate_cells, CellBatch, Model, ModelConfig, SyntheticWorld, WorldSpec};
use crate::sae::{self, FeatureCatalog, SaeParams, TrainConfig, TrainLog};
use crate::steering::{self, SteerSpec, SteeringOutcome};
use crate::tracing::{trace_exhaustive, CleanCache, EdgeGraph, SaeSet, Thresholds, TraceOptions, TraceSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub n_cells: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self { n_cells: 481 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Layers to train; empty means every boundary `0..n_layers`.
    pub layers: Vec<usize>,
    pub sae: TrainConfig,
    /// Minimum decoder loading for a feature to inherit a direction's annotation.
    pub annotation_min_cosine: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { layers: Vec::new(), sae: TrainConfig::default(), annotation_min_cosine: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub source_layer: usize,
    pub downstream_layers: Vec<usize>,
    pub n_cells: usize,
    pub thresholds: Thresholds,
    /// Progress line to stderr every this many features (0 disables).
    pub progress_every: usize,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            source_layer: 2,
            downstream_layers: vec![3, 4, 5],
            n_cells: 20,
            thresholds: Thresholds::default(),
            progress_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletSection {
    /// Triplet definitions; when absent, one same-pathway triplet per planted
    /// pathway group (plus one cross-pathway triplet given three groups).
    pub triplets_csv: Option<PathBuf>,
    pub measurement_layer: usize,
    pub n_cells: usize,
    pub report: ReportOptions,
}

impl Default for TripletSection {
    fn default() -> Self {
        Self { triplets_csv: None, measurement_layer: 3, n_cells: 200, report: ReportOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteerSection {
    /// Steer definitions; when absent, the world's planted steering features.
    pub specs_csv: Option<PathBuf>,
    pub alphas: Vec<f64>,
    pub early_fraction: f64,
    pub decile: f64,
}

impl Default for SteerSection {
    fn default() -> Self {
        Self { specs_csv: None, alphas: vec![2.0, 5.0], early_fraction: 0.3, decile: 0.1 }
    }
}

/// Everything a run needs; loaded from TOML with one table per command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; overrides `model.seed` and `train.sae.seed`.
    pub seed: u64,
    /// Worker threads (0 = available parallelism). Never changes results.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub force: bool,
    pub model: ModelConfig,
    pub world: WorldSpec,
    pub generate: GenerateSection,
    pub train: TrainSection,
    pub trace: TraceSection,
    pub triplets: TripletSection,
    pub steer: SteerSection,
    pub analyze: AnalysisOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            out_dir: PathBuf::from("run"),
            force: false,
            model: ModelConfig::default(),
            world: WorldSpec::default(),
            generate: GenerateSection::default(),
            train: TrainSection::default(),
            trace: TraceSection::default(),
            triplets: TripletSection::default(),
            steer: SteerSection::default(),
            analyze: AnalysisOptions::default(),
        }
    }
}

/// Execution-only settings, excluded from the config hash.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub force: bool,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Applies CLI overrides and propagates the master seed.
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Self> {
        if let Some(s) = overrides.seed {
            self.seed = s;
        }
        if let Some(w) = overrides.workers {
            self.workers = w;
        }
        if let Some(d) = &overrides.out_dir {
            self.out_dir = d.clone();
        }
        self.force |= overrides.force;
        self.model.seed = self.seed;
        self.train.sae.seed = self.seed;
        self.model.validate()?;
        Ok(self)
    }

    /// SHA-256 over the result-determining settings (excludes workers, out_dir, force).
    pub fn config_hash(&self) -> String {
        let mut hashed = self.clone();
        hashed.workers = 0;
        hashed.out_dir = PathBuf::new();
        hashed.force = false;
        let json = serde_json::to_vec(&hashed).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&json);
        h.update(crate::VERSION.as_bytes());
        hex::encode(h.finalize())
    }

    /// `config=<hash> version=<crate version>`, embedded in every artifact.
    pub fn stamp(&self) -> String {
        format!("config={} version={}", self.config_hash(), crate::VERSION)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn with_pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f)
    }
}

/// Artifact file names inside `out_dir`.
pub mod files {
    pub const WORLD: &str = "world.json";
    pub const MODEL: &str = "model.bin";
    pub const CELLS: &str = "cells.bin";
    pub const CATALOG: &str = "catalog.csv";
    pub const TRAIN_LOG: &str = "train_log.csv";
    pub const EDGES_CSV: &str = "edges.csv";
    pub const EDGES_BIN: &str = "edges.bin";
    pub const TRACE_SUMMARY: &str = "trace_summary.json";
    pub const TRIPLETS_USED: &str = "triplets_input.csv";
    pub const TRIPLET_REPORT: &str = "triplets_report.csv";
    pub const TRIPLET_DETAIL: &str = "triplets_detail.jsonl";
    pub const STEER_REPORT: &str = "steer_report.csv";
    pub const STEER_CELLS: &str = "steer_cells.jsonl";
    pub const STEER_GENES: &str = "steer_gene_deltas.csv";
    pub const HUBS: &str = "hubs.csv";
    pub const HISTOGRAM: &str = "edge_histogram.csv";
    pub const ANALYSIS: &str = "analysis.json";

    pub fn sae(layer: usize) -> String {
        format!("sae_layer{layer}.bin")
    }

    pub fn provenance(command: &str) -> String {
        format!("provenance_{command}.json")
    }
}

/// Collects a command's outputs, then writes them all after checking for
/// conflicts, so a refused run leaves the directory untouched.
struct Outputs<'a> {
    config: &'a RunConfig,
    command: &'static str,
    files: Vec<(String, Vec<u8>)>,
    inputs: BTreeMap<String, String>,
}

impl<'a> Outputs<'a> {
    fn new(config: &'a RunConfig, command: &'static str) -> Self {
        Self { config, command, files: Vec::new(), inputs: BTreeMap::new() }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn add_with(&mut self, name: impl Into<String>, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    /// Refuses early when outputs already exist and `force` is off.
    fn check(config: &RunConfig, names: &[String]) -> Result<()> {
        if config.force {
            return Ok(());
        }
        if let Some(existing) = names.iter().map(|n| config.path(n)).find(|p| p.exists()) {
            return Err(Error::Config(format!("{} already exists; pass --force to overwrite", existing.display())));
        }
        Ok(())
    }

    fn commit(mut self) -> Result<()> {
        let provenance = serde_json::json!({
            "command": self.command,
            "config_hash": self.config.config_hash(),
            "version": crate::VERSION,
            "inputs_sha256": self.inputs,
            "outputs_sha256": self.files.iter().map(|(n, b)| (n.clone(), sha256_hex(b))).collect::<BTreeMap<_, _>>(),
            "config": resolved_for_provenance(self.config),
        });
        let name = files::provenance(self.command);
        self.files.push((name, serde_json::to_vec_pretty(&provenance)?));
        let names: Vec<String> = self.files.iter().map(|(n, _)| n.clone()).collect();
        Self::check(self.config, &names)?;
        fs::create_dir_all(&self.config.out_dir)?;
        for (name, bytes) in &self.files {
            write_atomic(&self.config.path(name), bytes)?;
        }
        Ok(())
    }
}

fn resolved_for_provenance(config: &RunConfig) -> serde_json::Value {
    let mut c = config.clone();
    c.out_dir = PathBuf::new();
    c.force = false;
    serde_json::to_value(c).expect("config serializes")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_input(config: &RunConfig, name: &str, hint: &str) -> Result<Vec<u8>> {
    let path = config.path(name);
    fs::read(&path).map_err(|e| Error::Data(format!("cannot read {} ({e}); run `{hint}` first", path.display())))
}

fn json_with_stamp<T: Serialize>(value: &T, config: &RunConfig) -> Result<Vec<u8>> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("provenance".into(), serde_json::Value::String(config.stamp()));
    }
    Ok(serde_json::to_vec_pretty(&v)?)
}

/// Generated ground truth.
#[derive(Debug, Clone)]
pub struct Generated {
    pub world: SyntheticWorld,
    pub model: Model,
    pub cells: CellBatch,
}

/// Builds the world, model and cells and writes them to `out_dir`.
pub fn cmd_generate(config: &RunConfig) -> Result<Generated> {
    let names = [files::WORLD, files::MODEL, files::CELLS].map(String::from);
    Outputs::check(config, &names)?;
    let world = SyntheticWorld::generate(&config.model, &config.world, config.seed)?;
    let model = build_toy_model(&config.model, &world)?;
    let cells = generate_cells(&world, config.generate.n_cells, config.model.seq_len, config.seed.wrapping_add(1))?;

    let stamp = config.stamp();
    let mut out = Outputs::new(config, "generate");
    out.add(files::WORLD, json_with_stamp(&world, config)?);
    out.add(files::MODEL, io::encode_model(&model, &stamp));
    out.add(files::CELLS, io::encode_cells(&cells, &stamp));
    out.commit()?;
    Ok(Generated { world, model, cells })
}

/// Loads what `generate` wrote.
pub fn load_generated(config: &RunConfig) -> Result<Generated> {
    let world_bytes = read_input(config, files::WORLD, "generate")?;
    let world: SyntheticWorld = serde_json::from_slice(&world_bytes)?;
    let model = io::decode_model(&read_input(config, files::MODEL, "generate")?)?;
    world.check_against(&model.config)?;
    let cells = io::decode_cells(&read_input(config, files::CELLS, "generate")?)?;
    Ok(Generated { world, model, cells })
}

fn train_layers(config: &RunConfig) -> Vec<usize> {
    if config.train.layers.is_empty() {
        (0..config.model.n_layers).collect()
    } else {
        config.train.layers.clone()
    }
}

/// Trains one SAE per layer on every generated cell; writes SAEs, catalog and loss log.
pub fn cmd_train_sae(config: &RunConfig) -> Result<(Vec<SaeParams>, FeatureCatalog, Vec<TrainLog>)> {
    let layers = train_layers(config);
    let mut names: Vec<String> = layers.iter().map(|&l| files::sae(l)).collect();
    names.extend([files::CATALOG, files::TRAIN_LOG].map(String::from));
    Outputs::check(config, &names)?;

    let g = load_generated(config)?;
    if let Some(&bad) = layers.iter().find(|&&l| l > g.model.n_layers()) {
        return Err(Error::Config(format!("cannot train an SAE for layer {bad}")));
    }
    let trained = config.with_pool(|| {
        use rayon::prelude::*;
        let traces = g.model.forward_full(&g.cells.tokens)?;
        layers
            .par_iter()
            .map(|&layer| {
                let acts = sae::collect_activations(&traces, layer);
                let (params, log) = sae::train_sae(layer, &acts, &config.train.sae)?;
                let freq = sae::activation_frequency(&params, &acts)?;
                Ok((params, log, freq))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let stamp = config.stamp();
    let mut out = Outputs::new(config, "train-sae");
    let mut catalog = FeatureCatalog::default();
    let mut saes = Vec::new();
    let mut logs = Vec::new();
    for (params, log, freq) in trained {
        let labels = sae::annotate_features(&params, &g.world.annotations, config.train.annotation_min_cosine);
        catalog.extend(FeatureCatalog::for_layer(params.layer, &freq, &labels));
        out.add(files::sae(params.layer), io::encode_sae(&params, &stamp));
        saes.push(params);
        logs.push(log);
    }
    out.add_with(files::CATALOG, |buf| {
        use std::io::Write;
        writeln!(buf, "# {stamp}")?;
        catalog.write_csv(buf)
    })?;
    out.add_with(files::TRAIN_LOG, |buf| {
        use std::io::Write;
        writeln!(buf, "# {stamp}")?;
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["layer", "step", "heldout_loss"])?;
        for log in &logs {
            for &(step, loss) in &log.losses {
                w.write_record([log.layer.to_string(), step.to_string(), loss.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    out.commit()?;
    Ok((saes, catalog, logs))
}

/// Loads SAEs for `layers` plus the catalog.
pub fn load_saes(config: &RunConfig, layers: &[usize]) -> Result<(SaeSet, FeatureCatalog)> {
    let mut set = SaeSet::default();
    for &l in layers {
        let sae = io::decode_sae(&read_input(config, &files::sae(l), "train-sae")?)?;
        if sae.layer != l {
            return Err(Error::Data(format!("{} holds layer {}", files::sae(l), sae.layer)));
        }
        set.insert(sae);
    }
    let catalog = FeatureCatalog::read_csv(read_input(config, files::CATALOG, "train-sae")?.as_slice())?;
    Ok((set, catalog))
}

fn trace_cells(config: &RunConfig, cells: &CellBatch, n: usize) -> Result<Vec<usize>> {
    cells.sample_ids(n, config.seed.wrapping_add(2))
}

/// Exhaustive tracing from `trace.source_layer`; writes the edge graph (CSV and
/// binary) and the summary.
pub fn cmd_trace(config: &RunConfig) -> Result<(EdgeGraph, TraceSummary)> {
    let names = [files::EDGES_CSV, files::EDGES_BIN, files::TRACE_SUMMARY].map(String::from);
    Outputs::check(config, &names)?;
    let t = &config.trace;
    let g = load_generated(config)?;
    let mut layers = vec![t.source_layer];
    layers.extend(&t.downstream_layers);
    let (saes, catalog) = load_saes(config, &layers)?;
    let ids = trace_cells(config, &g.cells, t.n_cells)?;
    let tokens = g.cells.select(&ids).tokens;

    let options = TraceOptions {
        thresholds: t.thresholds,
        workers: config.workers,
        progress_every: t.progress_every,
        config_hash: config.config_hash(),
        seed: config.seed,
    };
    let graph = config.with_pool(|| {
        let cache = CleanCache::build(&g.model, &saes, &tokens, t.source_layer, &t.downstream_layers)?;
        trace_exhaustive(&g.model, &saes, &cache, &catalog, &options)
    })?;
    let summary = graph.summary();
    eprintln!(
        "traced {} features: {} edges ({} with none)",
        summary.features_traced, summary.total_edges, summary.zero_edge_features
    );

    let mut out = Outputs::new(config, "trace");
    out.add_with(files::EDGES_CSV, |buf| graph.write_csv(buf))?;
    out.add(files::EDGES_BIN, graph.to_bytes());
    out.add(files::TRACE_SUMMARY, json_with_stamp(&summary, config)?);
    out.commit()?;
    Ok((graph, summary))
}

/// Same-pathway triplets over the planted pathway copies at layers 0, 1 and 2,
/// mapped to the best-aligned SAE feature at each layer.
pub fn planted_triplets(world: &SyntheticWorld, saes: &SaeSet) -> Result<Vec<Triplet>> {
    let member = |layer: usize, dir: usize| -> Result<Member> {
        Ok(Member { layer, feature: saes.get(layer)?.best_feature_for(dir).0 })
    };
    let mut out = Vec::new();
    for (i, group) in world.pathway_groups.iter().enumerate() {
        out.push(Triplet {
            pathway_tag: format!("pathway-{i}"),
            kind: TripletKind::SamePathway,
            members: [member(0, group[0])?, member(1, group[1])?, member(2, group[2])?],
        });
    }
    if world.pathway_groups.len() >= 3 {
        let g = &world.pathway_groups;
        out.push(Triplet {
            pathway_tag: "mixed-0-1-2".into(),
            kind: TripletKind::CrossPathway,
            members: [member(0, g[0][0])?, member(1, g[1][1])?, member(2, g[2][2])?],
        });
    }
    Ok(out)
}

/// Seven-condition ablation for each triplet; writes the report table and per-target detail.
pub fn cmd_triplets(config: &RunConfig) -> Result<Vec<TripletReport>> {
    let names = [files::TRIPLETS_USED, files::TRIPLET_REPORT, files::TRIPLET_DETAIL].map(String::from);
    Outputs::check(config, &names)?;
    let t = &config.triplets;
    let g = load_generated(config)?;
    let mut inputs = BTreeMap::new();
    let triplets_from_csv = match &t.triplets_csv {
        Some(path) => {
            let bytes =
                fs::read(path).map_err(|e| Error::Data(format!("cannot read triplets {}: {e}", path.display())))?;
            inputs.insert(path.display().to_string(), sha256_hex(&bytes));
            Some(combinatorics::read_triplets_csv(bytes.as_slice())?)
        }
        None => None,
    };
    let mut layers: Vec<usize> = match &triplets_from_csv {
        Some(ts) => ts.iter().flat_map(|t| t.members.iter().map(|m| m.layer)).collect(),
        None => vec![0, 1, 2],
    };
    layers.push(t.measurement_layer);
    layers.sort_unstable();
    layers.dedup();
    let (saes, _) = load_saes(config, &layers)?;
    let triplets = match triplets_from_csv {
        Some(ts) => ts,
        None => planted_triplets(&g.world, &saes)?,
    };
    if triplets.is_empty() {
        return Err(Error::Data("no triplets to run (no CSV given and the world plants no pathways)".into()));
    }
    for tr in &triplets {
        tr.validate(t.measurement_layer)?;
    }
    let ids = trace_cells(config, &g.cells, t.n_cells.min(g.cells.len()))?;
    let batch = g.cells.select(&ids);

    let effects = config.with_pool(|| {
        let traces = g.model.forward_full(&batch.tokens)?;
        triplets
            .iter()
            .map(|tr| combinatorics::run_conditions(&g.model, &saes, tr, &traces, t.measurement_layer))
            .collect::<Result<Vec<_>>>()
    })?;
    let reports: Vec<TripletReport> =
        triplets.iter().zip(&effects).map(|(tr, fx)| combinatorics::triplet_report(tr, fx, &t.report)).collect();

    let stamp = config.stamp();
    let mut out = Outputs::new(config, "triplets");
    out.inputs = inputs;
    out.add_with(files::TRIPLETS_USED, |buf| combinatorics::write_triplets_csv(&triplets, buf))?;
    out.add_with(files::TRIPLET_REPORT, |buf| combinatorics::write_reports_csv(&reports, &stamp, buf))?;
    out.add_with(files::TRIPLET_DETAIL, |buf| {
        use std::io::Write;
        for (tr, fx) in triplets.iter().zip(&effects) {
            for te in fx.targets.iter().filter(|te| te.is_significant(t.report.significance)) {
                let mut d = serde_json::Map::new();
                for c in combinatorics::Condition::ALL {
                    d.insert(c.label().into(), serde_json::json!(finite_or_string(te.get(c))));
                }
                let line = serde_json::json!({
                    "pathway_tag": tr.pathway_tag,
                    "target": te.target,
                    "d": d,
                    "redundancy_ratio": te.redundancy_ratio(),
                    "pairwise_ratios": te.pairwise_ratios(),
                    "interaction": finite_or_string(te.interaction_term()),
                    "class": te.classify(t.report.epsilon),
                    "marginal_c_given_ab": finite_or_string(te.marginal_c_given_ab()),
                });
                writeln!(buf, "{line}")?;
            }
        }
        Ok(())
    })?;
    out.commit()?;
    Ok(reports)
}

/// JSON has no infinities; they are written as strings.
fn finite_or_string(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::json!(x.to_string())
    }
}

/// Steer specs for the world's planted steering features.
pub fn planted_steer_specs(world: &SyntheticWorld, saes: &SaeSet) -> Result<Vec<SteerSpec>> {
    world
        .steer_plants
        .iter()
        .map(|p| {
            let feature = saes.get(p.layer)?.best_feature_for(p.direction).0;
            let sign = if p.sign > 0.0 { "maturity" } else { "anti-maturity" };
            Ok(SteerSpec::new(p.layer, feature, format!("{sign}-L{}", p.layer)))
        })
        .collect()
}

/// Steers each spec in early cells; writes the summary table, per-cell shifts and gene deltas.
pub fn cmd_steer(config: &RunConfig) -> Result<Vec<SteeringOutcome>> {
    let names = [files::STEER_REPORT, files::STEER_CELLS, files::STEER_GENES].map(String::from);
    Outputs::check(config, &names)?;
    let s = &config.steer;
    let g = load_generated(config)?;
    let mut inputs = BTreeMap::new();
    let from_csv = match &s.specs_csv {
        Some(path) => {
            let bytes =
                fs::read(path).map_err(|e| Error::Data(format!("cannot read steer specs {}: {e}", path.display())))?;
            inputs.insert(path.display().to_string(), sha256_hex(&bytes));
            Some(steering::read_steer_specs_csv(bytes.as_slice())?)
        }
        None => None,
    };
    let mut layers: Vec<usize> = match &from_csv {
        Some(specs) => specs.iter().map(|s| s.layer).collect(),
        None => g.world.steer_plants.iter().map(|p| p.layer).collect(),
    };
    layers.sort_unstable();
    layers.dedup();
    let (saes, _) = load_saes(config, &layers)?;
    let mut specs = match from_csv {
        Some(specs) => specs,
        None => planted_steer_specs(&g.world, &saes)?,
    };
    if specs.is_empty() {
        return Err(Error::Data("no steer specs (no CSV given and the world plants none)".into()));
    }
    for spec in &mut specs {
        spec.alphas = s.alphas.clone();
        spec.early_fraction = s.early_fraction;
        spec.decile = s.decile;
        spec.validate()?;
    }

    let outcomes = config.with_pool(|| {
        let traces = g.model.forward_full(&g.cells.tokens)?;
        let logits: Vec<Vec<f64>> = traces.iter().map(|t| t.logits.clone()).collect();
        let sig = steering::compute_signatures(&g.cells.pseudotime, &logits, s.decile)?;
        let mut all = Vec::new();
        for spec in &specs {
            let sae = saes.get(spec.layer)?;
            all.extend(steering::steering_report(&g.model, sae, spec, &traces, &g.cells.pseudotime, &sig)?);
        }
        Ok(all)
    })?;

    let stamp = config.stamp();
    let mut out = Outputs::new(config, "steer");
    out.inputs = inputs;
    out.add_with(files::STEER_REPORT, |buf| steering::write_outcomes_csv(&outcomes, &stamp, buf))?;
    out.add_with(files::STEER_CELLS, |buf| steering::write_cell_shifts_jsonl(&outcomes, buf))?;
    out.add_with(files::STEER_GENES, |buf| steering::write_gene_deltas_csv(&outcomes, buf))?;
    out.commit()?;
    Ok(outcomes)
}

/// Loads the traced graph from its binary form.
pub fn load_graph(config: &RunConfig) -> Result<EdgeGraph> {
    EdgeGraph::from_bytes(&read_input(config, files::EDGES_BIN, "trace")?)
}

/// Hub, tail, attenuation and enrichment statistics of the traced graph.
pub fn cmd_analyze(config: &RunConfig) -> Result<AnalysisReport> {
    let names = [files::HUBS, files::HISTOGRAM, files::ANALYSIS].map(String::from);
    Outputs::check(config, &names)?;
    let graph = load_graph(config)?;
    let catalog = FeatureCatalog::read_csv(read_input(config, files::CATALOG, "train-sae")?.as_slice())?;
    let report = analysis::analyze(&graph, &catalog, &config.analyze)?;
    let counts = analysis::edge_counts(&graph);

    let stamp = config.stamp();
    let mut out = Outputs::new(config, "analyze");
    out.add_with(files::HUBS, |buf| analysis::write_hub_csv(&report.hubs, &stamp, buf))?;
    out.add_with(files::HISTOGRAM, |buf| analysis::write_histogram_csv(&counts, buf))?;
    out.add(files::ANALYSIS, json_with_stamp(&report, config)?);
    out.commit()?;
    Ok(report)
}
