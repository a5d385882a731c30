use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use neuroflux_cli::config::RunConfig;
use neuroflux_cli::{driver, report};

#[derive(Parser)]
#[command(name = "neuroflux", version, about = "EEG/fNIRS connectivity batch pipeline")]
struct Cli {
    /// Configuration file; built-in defaults apply when omitted
    #[arg(long, global = true, env = "NEUROFLUX_CONFIG")]
    config: Option<PathBuf>,

    /// Output directory, overriding the configured one
    #[arg(long, global = true, env = "NEUROFLUX_OUT")]
    out: Option<PathBuf>,

    /// Worker threads; 0 keeps one per core
    #[arg(long, global = true, env = "NEUROFLUX_THREADS", default_value_t = 0)]
    threads: usize,

    /// Seed override for synthetic generation
    #[arg(long, global = true, env = "NEUROFLUX_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic cohort as a dataset tree
    Synth,
    /// Analyze a dataset tree into connectivity matrices and statistics
    Run,
    /// Verify a result tree and render SVG heatmaps into it
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> neuroflux::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| neuroflux::Error::BadConfig(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
    }
    match cli.command {
        Command::Synth => {
            let out = cli.out.unwrap_or_else(|| cfg.io.data_dir.clone());
            let s = driver::cmd_synth(&cfg, &out)?;
            println!(
                "synth: {} subjects, {} files -> {}",
                s.n_subjects,
                s.n_files,
                s.out_dir.display()
            );
        }
        Command::Run => {
            let out = cli.out.unwrap_or_else(|| cfg.io.out_dir.clone());
            let data_dir = cfg.io.data_dir.clone();
            let s = driver::cmd_run(&cfg, &data_dir, &out)?;
            println!(
                "run: {} subjects, {} metrics, {} files at {} Hz -> {}",
                s.n_subjects,
                s.n_metrics,
                s.n_files,
                s.fs_effective,
                s.out_dir.display()
            );
        }
        Command::Report => {
            let tree = cli.out.unwrap_or_else(|| cfg.io.out_dir.clone());
            let s = report::cmd_report(&tree)?;
            println!("report: {} heatmaps -> {}", s.n_images, tree.display());
        }
    }
    Ok(())
}
