use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spinctl::{apply_options, run, validate_config, ExperimentKind, RunOptions, OUT_ENV};

#[derive(Parser)]
#[command(name = "spinctl", version, about = "Noise-aware optimal control of a single spin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the optimization grid size (n_steps).
    #[arg(long, global = true, value_name = "N")]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal control at the last lambda_inv of the continuation.
    Solve { config: PathBuf },
    /// S, E_out and fidelities along the lambda_inv continuation.
    Sweep { config: PathBuf },
    /// Monte Carlo fidelity against the weak-noise prediction.
    McValidate { config: PathBuf },
    /// Rotation-vector methods against the time-ordered product on sampled noise.
    MagnusCheck { config: PathBuf },
    /// Tabulate the kernel on the grid lags.
    KernelTable { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, path) = match cli.command {
        Command::Solve { config } => (ExperimentKind::Solve, config),
        Command::Sweep { config } => (ExperimentKind::Sweep, config),
        Command::McValidate { config } => (ExperimentKind::McValidate, config),
        Command::MagnusCheck { config } => (ExperimentKind::MagnusCheck, config),
        Command::KernelTable { config } => (ExperimentKind::KernelTable, config),
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(1);
        }
    };
    let opts = RunOptions { grid: cli.grid, out_dir: std::env::var_os(OUT_ENV).map(PathBuf::from) };
    let cfg = match validate_config(&text).and_then(|c| apply_options(c, &opts)) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{}: {e}", path.display());
            return ExitCode::from(1);
        }
    };
    if cfg.kind != kind {
        eprintln!(
            "{}: kind: config declares `{}` but `{}` was requested",
            path.display(),
            cfg.kind.name(),
            kind.name()
        );
        return ExitCode::from(1);
    }
    match run(&cfg) {
        Ok(report) => {
            println!("wrote {} to {}", report.files.join(", "), cfg.output);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
