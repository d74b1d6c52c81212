use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tutor_erl::trainer::{self, Ablation, RunConfig, RunSummary};

#[derive(Parser)]
#[command(name = "tutor-erl", version, about = "Evolve and train tutoring policies against a simulated student")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full training loop.
    Train {
        config: PathBuf,
        /// Continue from run_state.bin in the output directory.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Evaluate individuals one at a time.
        #[arg(long)]
        serial: bool,
    },
    /// Train with one ablation flag switched on.
    Ablate {
        config: PathBuf,
        /// disable_ea, disable_prm or single_adapter
        flag: String,
        /// Defaults to `<output_dir>-<flag>`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        serial: bool,
    },
    /// Evaluate a saved policy with frozen weights and print a JSON summary.
    Eval { checkpoint: PathBuf, config: PathBuf },
    /// Write projection.csv for the elites of a finished run.
    ExportProjection { run_dir: PathBuf },
    /// Check a configuration and its graph document without training.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn print_summary(s: &RunSummary) {
    for r in &s.reports {
        let m = &r.metrics;
        println!(
            "gen {:>3}  fitness mean {:>9.4} max {:>9.4}  sv {:.4}  gate {:.3}  depth {:.3}  ({:.1}s)",
            r.generation, m.fitness_mean, m.fitness_max, m.sv, m.gate_rate, m.depth_mean, r.wall_seconds
        );
    }
    println!("outputs written to {}", s.output_dir.display());
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            resume,
            output_dir,
            serial,
        } => {
            let mut cfg = load(&config)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            cfg.parallel &= !serial;
            print_summary(&trainer::run(&cfg, resume)?);
        }
        Command::Ablate {
            config,
            flag,
            output_dir,
            serial,
        } => {
            let mut cfg = load(&config)?;
            if !Ablation::FLAGS.contains(&flag.as_str()) {
                bail!("unknown ablation flag `{flag}` (expected one of {})", Ablation::FLAGS.join(", "));
            }
            cfg.ablation.set(&flag)?;
            cfg.output_dir = output_dir.unwrap_or_else(|| {
                let mut name = cfg.output_dir.as_os_str().to_owned();
                name.push(format!("-{flag}"));
                PathBuf::from(name)
            });
            cfg.parallel &= !serial;
            print_summary(&trainer::run(&cfg, false)?);
        }
        Command::Eval { checkpoint, config } => {
            let cfg = load(&config)?;
            let summary = trainer::evaluate_checkpoint(&cfg, &checkpoint)
                .with_context(|| format!("evaluating {}", checkpoint.display()))?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::ExportProjection { run_dir } => {
            let n = trainer::export_projection(&run_dir)?;
            if n == 0 {
                bail!("{} has fewer than two elite points to project", run_dir.display());
            }
            println!("wrote {n} rows to {}", run_dir.join("projection.csv").display());
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            let dims = trainer::validate(&cfg)?;
            println!(
                "ok: {} concepts, {} input features, hidden width {}",
                dims.concepts, dims.input, dims.hidden
            );
        }
    }
    Ok(())
}
