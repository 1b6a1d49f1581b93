use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hypocoerce::entropy::EntropyGenerator;

mod commands;
mod input;
mod plot;

use input::TimeGrid;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("malformed input: {0}")]
    Input(String),
    #[error("condition (A) not satisfied: {0}")]
    ConditionA(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::ConditionA(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "hypocoerce", version, about = "Decay certificates and entropy traces for linear Fokker-Planck equations")]
struct Cli {
    /// Tolerance for reported residual checks.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Condition (A), steady state, Hörmander order and normal form of a model.
    Analyze { model: PathBuf },
    /// Decay certificate `P` and rate for a model.
    Certificate {
        model: PathBuf,
        /// Rate reduction for defective minimal eigenvalues.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Entropy trace of an exact Gaussian trajectory, with a plot script.
    Simulate {
        model: PathBuf,
        /// Entropy generator: `log` or `power:p` with 1 < p ≤ 2.
        #[arg(long, default_value = "power:2", value_parser = input::parse_psi)]
        psi: EntropyGenerator,
        /// Time grid `start:end:count`.
        #[arg(long = "t-grid", default_value = "0:8:400")]
        t_grid: TimeGrid,
        /// Gaussian initial datum `{"mean": [...], "cov": [[...]]}`.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Kinetic Fokker-Planck certificate from `{nu, sigma, gamma1, gamma2, tau}`.
    Kinetic {
        params: PathBuf,
        /// Family parameter in [−1, 1]; overrides the file.
        #[arg(long, allow_hyphen_values = true)]
        tau: Option<f64>,
    },
    /// Conditions, spectrum and decay for a nonlocal perturbation.
    Perturb {
        perturbation: PathBuf,
        model: PathBuf,
        /// Weight exponent of the space with ω(x) = Σ cosh(β x_ℓ).
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Grid points per axis.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        half_width: Option<f64>,
        /// Admissibility bound for the sampled sup of Re ∫ θ̂.
        #[arg(long, default_value_t = 50.0)]
        re_integral_bound: f64,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("HYPOCOERCE_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| CliError::Input(format!("HYPOCOERCE_THREADS = {v:?} is not a positive integer")))?;
    if n == 0 {
        return Err(CliError::Input("HYPOCOERCE_THREADS must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Io(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let common = commands::Common { out: cli.out, tol: cli.tol };
    match cli.command {
        Command::Analyze { model } => commands::analyze(&model, &common),
        Command::Certificate { model, epsilon } => commands::certificate(&model, epsilon, &common),
        Command::Simulate { model, psi, t_grid, init, epsilon } => {
            commands::simulate(&model, psi, t_grid, init.as_deref(), epsilon, &common)
        }
        Command::Kinetic { params, tau } => commands::kinetic(&params, tau, &common),
        Command::Perturb { perturbation, model, beta, n, half_width, re_integral_bound } => {
            let opts = commands::PerturbOptions { beta, n, half_width, re_integral_bound };
            commands::perturb(&perturbation, &model, &opts, &common)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
