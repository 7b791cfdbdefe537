mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::commands::{EquationChoice, EstimatorChoice, FigureChoice, FormulaChoice, GreenChoice, SpectralTask};
use crate::config::Settings;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dormant_pam::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} acceptance criteria failed")]
    VerifyFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use dormant_pam::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Convergence { .. } | E::PopulationCap { .. }) => 3,
            CliError::Core(E::Io(_)) | CliError::Io(_) => 1,
            CliError::Core(_) => 2,
            CliError::VerifyFailed(_) => 4,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "dpam", version, about = "Two-type branching random walk in random environment: estimators, solvers, rates")]
struct Cli {
    /// JSON file with settings (same keys as the flags, lower_snake_case).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, env = "DPAM_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Output file; defaults to `<out_dir>/<subcommand>.csv`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo estimate of ⟨U(t)⟩.
    Estimate {
        #[arg(long, value_enum, default_value = "fk")]
        estimator: EstimatorChoice,
        /// Integrate the walk out given α (difference-walk estimator only).
        #[arg(long)]
        integrate_walk: bool,
        #[command(flatten)]
        settings: Settings,
    },
    /// Lattice PDE solves with snapshots.
    Pde {
        #[arg(long, value_enum, default_value = "pam")]
        equation: EquationChoice,
        /// Snapshot times (comma separated); the horizon is always included.
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<f64>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Eigenvalues, growth rates, Green's functions and radius sweeps.
    Spectral {
        #[arg(long, value_enum, default_value = "growth-one")]
        task: SpectralTask,
        /// Box radii to sweep (comma separated).
        #[arg(long, value_delimiter = ',')]
        radii: Vec<usize>,
        #[arg(long, value_enum, default_value = "laplace")]
        method: GreenChoice,
        /// Green's function of the two-type walk instead of the simple walk.
        #[arg(long)]
        two_type: bool,
        /// Also write the eigenvector of the largest radius here.
        #[arg(long)]
        eigenvector: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Asymptotic rate formulas, including the two-sided variational/closed-form growth report.
    Rates {
        #[arg(long, value_enum, default_value = "all")]
        formula: FormulaChoice,
        /// Green's value G_d(0) for lambda-tilde (computed when absent).
        #[arg(long)]
        green: Option<f64>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Figure curve data.
    Figures {
        #[arg(long, value_enum)]
        figure: FigureChoice,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0, 2.0])]
        s1_values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0])]
        t_grid: Vec<f64>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run the acceptance suite and print a PASS/FAIL table.
    Verify {
        /// Criterion numbers to run (comma separated); all when absent.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        #[command(flatten)]
        settings: Settings,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let out = commands::Output::new(cli.output, cli.out_dir);
    match cli.command {
        Command::Estimate { estimator, integrate_walk, settings } => {
            commands::estimate(estimator, integrate_walk, &settings.over(file).resolve()?, &out)
        }
        Command::Pde { equation, snapshots, settings } => commands::pde(equation, &snapshots, &settings.over(file).resolve()?, &out),
        Command::Spectral { task, radii, method, two_type, eigenvector, settings } => {
            let s = settings.over(file).resolve()?;
            commands::spectral(task, &radii, method, two_type, eigenvector.as_deref(), &s, &out)
        }
        Command::Rates { formula, green, settings } => commands::rates(formula, green, &settings.over(file).resolve()?, &out),
        Command::Figures { figure, s1_values, t_grid, settings } => {
            commands::figures(figure, &s1_values, &t_grid, &settings.over(file).resolve()?, &out)
        }
        Command::Verify { only, settings } => commands::verify(&only, &settings.over(file).resolve()?, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpam: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
