//! Command-line driver: check -> init -> solve -> verify pipelines over a
//! TOML run configuration.

use clap::{Parser, Subcommand};
use gpje::config::RunConfig;
use gpje::pipeline;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gpje",
    about = "Design and verification of near-field reflectors and refractors \
             via generated prescribed Jacobian equations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the structure conditions and domain convexity for the
    /// configured model.
    Check,
    /// Construct the initial uniformly g-convex field.
    Init {
        /// Build even when the condition check fails.
        #[arg(long)]
        force: bool,
        /// Use the bare seed construction without the envelope extension.
        #[arg(long)]
        skip_envelope: bool,
    },
    /// Run the homotopy continuation from the initial field.
    Solve,
    /// Ray-trace and mass-conservation validation of the solved field.
    Verify,
    /// Export grids or derived fields as CSV.
    Export {
        /// What to export: "grid" or "tmap".
        #[arg(long)]
        what: String,
    },
}

fn load_config(cli: &Cli) -> gpje::Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| gpje::Error::config("--config <path> is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> gpje::Result<bool> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Check => {
            let report = pipeline::cmd_check(&cfg)?;
            println!("{}", report.summary);
            println!(
                "K0 = {:.6}, J0 = ({:.6}, {:.6})",
                report.constants.k0, report.constants.j0.lo, report.constants.j0.hi
            );
            println!("report: {}", cfg.out_path("check_report.json").display());
            Ok(report.ok)
        }
        Command::Init { force, skip_envelope } => {
            let artifacts = pipeline::cmd_init(&cfg, *force, *skip_envelope)?;
            println!(
                "initial field written to {} (rho = {:.4}, min lambda = {:.3e}, boundary offset \
                 = {:.3e}, path = {})",
                artifacts.path,
                artifacts.rho,
                artifacts.min_lambda,
                artifacts.max_boundary_offset,
                if artifacts.skip_envelope { "bare seed" } else { "envelope" },
            );
            Ok(true)
        }
        Command::Solve => {
            let meta = pipeline::cmd_solve(&cfg)?;
            println!(
                "solved to t = {}, eps = {:.1e}: residual {:.3e} / {:.3e}, min lambda {:.3e}, \
                 wall time {:.1}s",
                meta.t_final,
                meta.eps_final,
                meta.interior_residual,
                meta.boundary_residual,
                meta.min_lambda,
                meta.wall_time_s
            );
            println!("artifacts: solution.csv, trace.csv, meta.json in {}", cfg.output.dir);
            Ok(true)
        }
        Command::Verify => {
            let report = pipeline::cmd_verify(&cfg)?;
            if let Some(ray) = &report.ray {
                println!(
                    "rays: max deviation {:.3e}, mean {:.3e}, misses {}",
                    ray.max_deviation, ray.mean_deviation, ray.miss_count
                );
            }
            println!(
                "mass: max bin mismatch {:.3e}, bookkeeping {:.3e}, containment failures {}",
                report.mass.max_bin_mismatch,
                report.mass.bookkeeping_error,
                report.mass.containment_failures
            );
            for n in &report.notes {
                println!("note: {n}");
            }
            Ok(report.ok)
        }
        Command::Export { what } => {
            let path = pipeline::cmd_export(&cfg, what)?;
            println!("wrote {path}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
