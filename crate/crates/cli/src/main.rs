mod analyze;
mod serve;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use safelab_core::Error;

#[derive(Parser)]
#[command(name = "safelab", version, about = "Safe exploration task: simulation, analysis and serving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run simulated participants and write their choice records plus a summary.
    Simulate(simulate::Args),
    /// Analyze a record file.
    Analyze(analyze::Args),
    /// Serve interactive sessions over HTTP.
    Serve(serve::Args),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Analysis {
    Logistic,
    Tree,
    Distance,
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

fn is_numerical(e: &Error) -> bool {
    match e {
        Error::NumericalFailure(_) | Error::Separation(_) | Error::Collinearity(_) => true,
        Error::Block { source, .. } => is_numerical(source),
        _ => false,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if is_numerical(&e) {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

pub fn io_context(path: &std::path::Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &PathBuf) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(io_context(dir))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    let result = match cli.command {
        Command::Simulate(args) => simulate::run(args),
        Command::Analyze(args) => analyze::run(args),
        Command::Serve(args) => serve::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
