// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end. All work happens in `circuitscope::pipeline`.

use std::path::PathBuf;
use std::process::ExitCode;

use circuitscope::pipeline::{self, Overrides, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "circuitscope", version, about = "Trace, ablate and steer SAE features in a toy residual model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the planted world, the toy model and the synthetic cells.
    Generate(Common),
    /// Train one TopK SAE per layer and write the feature catalog.
    TrainSae(Common),
    /// Exhaustively trace every active source feature to downstream layers.
    Trace(Common),
    /// Run seven-condition ablations over feature triplets.
    Triplets(Common),
    /// Amplify features in early cells and score the state shift.
    Steer(Common),
    /// Hub, tail, attenuation and enrichment statistics of the edge graph.
    Analyze(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Directory holding inputs and outputs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn resolve(&self) -> circuitscope::Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        base.resolve(&Overrides {
            seed: self.seed,
            workers: self.workers,
            out_dir: self.out_dir.clone(),
            force: self.force,
        })
    }
}

fn run(cli: Cli) -> circuitscope::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let g = pipeline::cmd_generate(&c.resolve()?)?;
            eprintln!("generated {} cells, {} planted edges", g.cells.len(), g.world.planted_edges.len());
        }
        Command::TrainSae(c) => {
            let (saes, _, _) = pipeline::cmd_train_sae(&c.resolve()?)?;
            eprintln!("trained {} SAEs", saes.len());
        }
        Command::Trace(c) => {
            pipeline::cmd_trace(&c.resolve()?)?;
        }
        Command::Triplets(c) => {
            for r in pipeline::cmd_triplets(&c.resolve()?)? {
                match r.pairwise_ratio_median {
                    Some(m) => eprintln!("{}: {} targets, pairwise ratio median {m:.3}", r.pathway_tag, r.n_targets),
                    None => eprintln!("{}: no significant targets", r.pathway_tag),
                }
            }
        }
        Command::Steer(c) => {
            for o in pipeline::cmd_steer(&c.resolve()?)? {
                match o.mean_shift {
                    Some(m) => {
                        eprintln!("{} alpha={}: mean shift {m:.3e} over {} cells", o.label, o.alpha, o.cells.len())
                    }
                    None => eprintln!("{} alpha={}: no early cells with the feature active", o.label, o.alpha),
                }
            }
        }
        Command::Analyze(c) => {
            let report = pipeline::cmd_analyze(&c.resolve()?)?;
            eprintln!(
                "{} edges, strictly decreasing by layer: {}",
                report.summary.total_edges,
                report.attenuation.strictly_decreasing()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
