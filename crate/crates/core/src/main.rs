// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use assertgen::config::RunConfig;
use assertgen::pipeline::{Overrides, Pipeline, PipelineError, Stage};

#[derive(Parser)]
#[command(name = "assertgen", version, about = "Generate SystemVerilog assertions from a specification and RTL")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run ingest through sva.
    Run(Common),
    /// Chunk the specification documents.
    Ingest(Common),
    /// Expand the entity worklist from the seed signal.
    Entities(Common),
    /// Generate verification objectives for every visited signal.
    Objectives(Common),
    /// Extract signal chains for the objectives' signals.
    Chains(Common),
    /// Map objectives to code segments.
    Bridge(Common),
    /// Generate, validate, and emit assertions.
    Sva(Common),
    /// Generate mutants and aggregate verdicts and reports.
    Mutate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Root module when the design has several candidates.
    #[arg(long)]
    top: Option<String>,
    /// Follow chains from loads back to drivers.
    #[arg(long)]
    reverse_chains: bool,
    /// Write the retrieval index to index.json (ingest).
    #[arg(long)]
    dump_index: bool,
    /// Write parsed syntax trees to ast.json (chains).
    #[arg(long)]
    dump_ast: bool,
    /// Write the connectivity graph to graph.json (chains).
    #[arg(long)]
    dump_graph: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, c) = match cli.command {
        Cmd::Run(c) => (None, c),
        Cmd::Ingest(c) => (Some(Stage::Ingest), c),
        Cmd::Entities(c) => (Some(Stage::Entities), c),
        Cmd::Objectives(c) => (Some(Stage::Objectives), c),
        Cmd::Chains(c) => (Some(Stage::Chains), c),
        Cmd::Bridge(c) => (Some(Stage::Bridge), c),
        Cmd::Sva(c) => (Some(Stage::Sva), c),
        Cmd::Mutate(c) => (Some(Stage::Mutate), c),
    };
    match execute(stage, c) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("assertgen: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(stage: Option<Stage>, c: Common) -> Result<(), PipelineError> {
    let config = RunConfig::load(&c.config)?;
    let overrides = Overrides {
        top: c.top,
        reverse_chains: c.reverse_chains,
        dump_index: c.dump_index,
        dump_ast: c.dump_ast,
        dump_graph: c.dump_graph,
    };
    let p = Pipeline::new(config, overrides);
    match stage {
        None => {
            let report = p.run()?;
            for (st, r) in &report.stages {
                println!("{st:<10} {:<6} {:?}", r.status, r.counts);
                for w in &r.warnings {
                    println!("           warning: {w}");
                }
            }
        }
        Some(st) => {
            let r = p.run_stage(st)?;
            println!("{st:<10} {:<6} {:?}", r.status, r.counts);
            for w in &r.warnings {
                println!("           warning: {w}");
            }
        }
    }
    println!("artifacts in {}", p.out_dir().display());
    Ok(())
}
