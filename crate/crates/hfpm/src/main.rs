use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hfpm::commands;
use hfpm::table::{TableFile, TABLE_ENV};
use hfpm::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "hfpm", version, about = "Hybrid SLC/MLC crossbar PIM simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cost table (JSON).
    #[arg(long, env = TABLE_ENV)]
    table: Option<PathBuf>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// SVD and hard-threshold truncation of every weight matrix.
    Decompose(Common),
    /// Fine-tune the factors and save per-rank gradient records.
    Finetune(Common),
    /// Run the k_percent × seed × selection grid through the crossbar model.
    Simulate(Common),
    /// Summarise simulate outputs into CSV and markdown tables.
    Report {
        /// Run directories or results.csv files.
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> hfpm::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Decompose(c) => {
            let cfg = load_config(&c)?;
            let out = cfg.output_dir(c.out.as_deref());
            print_paths(&commands::cmd_decompose(&cfg, &out).context("decompose")?);
        }
        Command::Finetune(c) => {
            let cfg = load_config(&c)?;
            let out = cfg.output_dir(c.out.as_deref());
            print_paths(&commands::cmd_finetune(&cfg, &out).context("finetune")?);
        }
        Command::Simulate(c) => {
            let cfg = load_config(&c)?;
            let table = TableFile::resolve(c.table.as_deref(), None)?;
            let out = cfg.output_dir(c.out.as_deref());
            print_paths(&commands::cmd_simulate(&cfg, &table.table, c.jobs, &out).context("simulate")?);
        }
        Command::Report { paths, out } => {
            let out = out.unwrap_or_else(|| Path::new("hfpm-report").to_path_buf());
            let (written, warnings) = commands::cmd_report(&paths, &out).context("report")?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            print_paths(&written);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<CliError>()).map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
