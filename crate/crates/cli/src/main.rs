//! `anchorinv` — configuration-driven anchored stochastic inversion.
//!
//! Subcommands: `simulate` (synthetic truth and data), `invert` (the full
//! pipeline), `predict` (regenerate predictive fields from a run
//! directory), `diagnose` (audit a run), `select-anchors` (anchor-count
//! stabilization search).
//!
//! Exit codes: 0 ok, 2 configuration error, 3 numerical error,
//! 4 inference failure (all candidates degenerate).

mod config;
mod diagnose;
mod manifest;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use anchorinv::error::Result;
use config::ExperimentConfig;
use run::RunContext;

#[derive(Parser)]
#[command(
    name = "anchorinv",
    version,
    about = "Anchored stochastic inversion of spatial fields"
)]
struct Cli {
    /// Worker threads for candidate evaluation (default: all cores).
    /// Results are independent of this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic truth field and both data types.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Validate the config and print the plan without computing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run the full pipeline: data, inversion, prediction, summaries.
    Invert {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dry_run: bool,
        /// Dump each candidate's forward-output cloud to clouds/*.csv.
        #[arg(long)]
        dump_clouds: bool,
    },
    /// Regenerate predictive fields and summaries from a completed run.
    Predict {
        run_dir: PathBuf,
        /// Number of predictive fields (default: config value).
        #[arg(long)]
        fields: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Audit a completed run: recount the CSV artifacts against the manifest.
    Diagnose { run_dir: PathBuf },
    /// Search the anchor counts from the config for prediction stabilization.
    SelectAnchors {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dry_run: bool,
    },
}

fn make_context(
    config_path: &Path,
    seed: Option<u64>,
    out: &Path,
    threads: usize,
) -> Result<RunContext> {
    let (config, config_text) = ExperimentConfig::load(config_path)?;
    let seed = seed.unwrap_or(config.seed);
    Ok(RunContext {
        config,
        config_text,
        out: out.to_path_buf(),
        seed,
        threads,
    })
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = cli.threads.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anchorinv::Error::Config(format!("cannot build thread pool: {e}")))?;

    match cli.command {
        Command::Simulate {
            config,
            seed,
            out,
            dry_run,
        } => {
            let ctx = make_context(&config, seed, &out, threads)?;
            if dry_run {
                return run::print_plan(&ctx, "simulate");
            }
            run::cmd_simulate(&ctx)
        }
        Command::Invert {
            config,
            seed,
            out,
            dry_run,
            dump_clouds,
        } => {
            let ctx = make_context(&config, seed, &out, threads)?;
            if dry_run {
                return run::print_plan(&ctx, "invert");
            }
            run::cmd_invert(&ctx, dump_clouds)
        }
        Command::Predict {
            run_dir,
            fields,
            seed,
        } => run::cmd_predict(&run_dir, fields, seed),
        Command::Diagnose { run_dir } => diagnose::cmd_diagnose(&run_dir),
        Command::SelectAnchors {
            config,
            seed,
            out,
            dry_run,
        } => {
            let ctx = make_context(&config, seed, &out, threads)?;
            if dry_run {
                return run::print_plan(&ctx, "select-anchors");
            }
            run::cmd_select_anchors(&ctx)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
