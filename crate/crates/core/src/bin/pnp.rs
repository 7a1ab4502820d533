use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pnp_core::harness::{
    default_output_dir, degrade_only, gate_table, load_images, probe_denoiser, run_experiment, ExperimentConfig,
};
use pnp_core::Result;

#[derive(Parser)]
#[command(name = "pnp", version, about = "Plug-and-Play MAP estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (image, realization, alpha, solver) cell and write metrics, images and traces.
    Run {
        config: PathBuf,
        /// Output directory; defaults to `<config stem>-out` next to the config.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print the convergence gate reports for each alpha as JSON.
    Gates { config: PathBuf },
    /// Probe the denoiser's Lipschitz constants and, for closed-form priors, Tweedie's identity.
    Probe { config: PathBuf },
    /// Write the degraded observations and initial images only.
    Degrade {
        config: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<(ExperimentConfig, Vec<(String, pnp_core::ImageGrid)>)> {
    let cfg = ExperimentConfig::from_path(path)?;
    let images = load_images(&cfg.images)?;
    Ok((cfg, images))
}

fn print_json<T: serde::Serialize>(value: &T) {
    match serde_json::to_string_pretty(value) {
        Ok(s) => println!("{s}"),
        Err(e) => eprintln!("error: {e}"),
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let (cfg, images) = load(&config)?;
            let dir = out.unwrap_or_else(|| default_output_dir(&config));
            let result = run_experiment(&cfg, &images, Some(&dir))?;
            for s in &result.summary {
                let psnr = s.psnr_mean.map_or("-".to_string(), |p| format!("{p:.2}"));
                println!(
                    "alpha={:<8} solver={:<5} psnr_mean={:>7} failed={}/{}",
                    s.alpha, s.solver, psnr, s.failed, s.cells
                );
            }
            for r in result.rows.iter().filter(|r| !r.error.is_empty()) {
                eprintln!(
                    "{} r{} alpha={} {}: {}",
                    r.image, r.realization, r.alpha, r.solver, r.error
                );
            }
            println!("wrote {}", dir.display());
            Ok(if result.any_diverged() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Gates { config } => {
            let (cfg, images) = load(&config)?;
            print_json(&gate_table(&cfg, &images)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Probe { config } => {
            let (cfg, images) = load(&config)?;
            print_json(&probe_denoiser(&cfg, &images)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Degrade { config, out } => {
            let (cfg, images) = load(&config)?;
            let dir = out.unwrap_or_else(|| default_output_dir(&config));
            let rows = degrade_only(&cfg, &images, &dir)?;
            for r in &rows {
                println!("{} r{} input_psnr={:.2}", r.image, r.realization, r.input_psnr);
            }
            println!("wrote {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
