use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hdr_fringe_cli::{
    cmd_compare, cmd_fuse, cmd_match, cmd_phase, cmd_pipeline, cmd_reconstruct, cmd_simulate,
    CliError, CompareOptions, PipelineConfig,
};

/// Saturation-tolerant multi-frequency fringe projection, stage by stage.
#[derive(Debug, Parser)]
#[command(name = "hdr-fringe", version)]
struct Cli {
    /// JSON configuration; defaults are used for missing fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Simulator seed (overrides the configuration).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Solve every level with all samples and keep only the densest level.
    #[arg(long, global = true)]
    naive: bool,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Dataset directory (overrides the configuration).
    #[arg(long, global = true, value_name = "DIR")]
    input: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic dataset into the output directory.
    Simulate {
        /// Built-in scene name or scene file (overrides the configuration).
        #[arg(long)]
        scene: Option<String>,
    },
    /// Saturation maps and wrapped phases.
    Phase,
    /// Multi-frequency fusion.
    Fuse,
    /// Sub-pixel stereo matching.
    Match,
    /// Triangulation and metrics.
    Reconstruct,
    /// phase, fuse, match and reconstruct.
    Pipeline,
    /// Compare a fused and a naive phase map against ground truth.
    Compare {
        /// Saturation-tolerant phase map (PFM).
        fused: PathBuf,
        /// Naive phase map (PFM).
        naive_map: PathBuf,
        /// Ground-truth phase map (PFM).
        truth: PathBuf,
        /// Highest harmonic of the truth phase in the ripple spectrum.
        #[arg(long, default_value_t = CompareOptions::default().harmonics)]
        harmonics: usize,
    },
    /// Print the effective configuration as JSON.
    PrintConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.output {
        cfg.output = o;
    }
    if let Some(i) = cli.input {
        cfg.input = i;
    }
    match cli.command {
        Command::Simulate { scene } => {
            if let Some(s) = scene {
                cfg.simulation.scene = s;
            }
            let files = cmd_simulate(&cfg)?;
            println!("wrote {} files to {}", files.len(), cfg.output.display());
        }
        Command::Phase => cmd_phase(&cfg, cli.naive)?,
        Command::Fuse => cmd_fuse(&cfg, cli.naive)?,
        Command::Match => {
            let n = cmd_match(&cfg)?;
            println!("{n} matches");
        }
        Command::Reconstruct => print!("{}", cmd_reconstruct(&cfg, cli.naive)?),
        Command::Pipeline => print!("{}", cmd_pipeline(&cfg, cli.naive)?),
        Command::Compare {
            fused,
            naive_map,
            truth,
            harmonics,
        } => {
            let opts = CompareOptions {
                harmonics,
                ..CompareOptions::default()
            };
            let c = cmd_compare(&fused, &naive_map, &truth, &opts)?;
            print!("{}", c.to_text());
            let dir = cfg.output;
            std::fs::create_dir_all(&dir)
                .and_then(|_| std::fs::write(dir.join("compare.kv"), c.to_key_value()))
                .map_err(|source| CliError::Stage {
                    stage: "compare",
                    source: hdr_fringe::Error::Io { path: dir, source },
                })?;
        }
        Command::PrintConfig => print!("{}", cfg.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
