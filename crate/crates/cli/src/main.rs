use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pdeopt", version, about = "Adjoint-based PDE-constrained optimization demos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the problem described by a config file.
    Run { config: PathBuf },
    /// Compare adjoint derivatives with finite differences.
    GradientCheck { config: PathBuf },
    /// List the available problems.
    List,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match Cli::parse().command {
        Command::Run { config } => pdeopt_cli::run_command(&config),
        Command::GradientCheck { config } => pdeopt_cli::gradient_check_command(&config),
        Command::List => {
            print!("{}", pdeopt_cli::list_problems());
            0
        }
    };
    ExitCode::from(code as u8)
}
