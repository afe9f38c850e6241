use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nscert_cli::config::Config;
use nscert_cli::pipeline::{run_certification, run_constants};
use nscert_cli::CliError;

/// Existence certification for Euler/Navier-Stokes flows on the torus.
#[derive(Parser)]
#[command(name = "nscert", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute inequality constants and cache them as JSON files.
    Constants(RunArgs),
    /// Certify an existence horizon and emit report/bound files.
    Certify(RunArgs),
    /// Certify, then compare the bounds against a refined reference run.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Problem configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides out_dir from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rayon thread count (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// RNG seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Constants(a) | Command::Certify(a) | Command::Validate(a) => a,
    };
    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("nscert: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli.command, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("nscert: {e}");
            e.exit_code()
        }
    }
}

fn run(command: &Command, args: &RunArgs) -> Result<ExitCode, CliError> {
    let mut cfg = Config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    match command {
        Command::Constants(_) => {
            let table = run_constants(&cfg, &out_dir)?;
            println!(
                "wrote {} constant file(s) to {}",
                table.entries.len(),
                out_dir.display()
            );
            for e in &table.entries {
                println!(
                    "  (p={}, n={}): K_pn={:.9e} G_pn={:.9e} plateau={}",
                    e.p, e.n, e.k_pn, e.g_pn, e.plateau
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify(_) | Command::Validate(_) => {
            let with_validation = matches!(command, Command::Validate(_));
            let outcome = run_certification(&cfg, &out_dir, with_validation)?;
            let cert = outcome
                .report
                .certification
                .as_ref()
                .expect("complete run has a certification block");
            let t_c = if cert.certified_globally {
                "inf".to_string()
            } else {
                format!("{}", cert.t_c.0)
            };
            println!("T_c = {t_c} (report in {})", out_dir.display());
            if let Some(v) = &outcome.report.validation {
                println!(
                    "validation: {} ({} grid points compared)",
                    if v.pass { "pass" } else { "FAIL" },
                    v.compared_points
                );
            }
            if outcome.collapsed {
                // Shortened horizon: report written, contract says exit 4.
                return Ok(ExitCode::from(4));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
