mod args;
mod commands;

use args::Cli;
use clap::Parser;
use std::process::ExitCode;

/// A failed command: one `ERROR <stage>: <message>` line on stderr.
#[derive(Debug)]
pub struct CliError {
    pub stage: String,
    pub message: String,
    pub code: u8,
}

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_EMPTY: u8 = 3;

impl CliError {
    pub fn validation(stage: &str, message: impl ToString) -> Self {
        Self {
            stage: stage.into(),
            message: message.to_string(),
            code: EXIT_VALIDATION,
        }
    }

    pub fn runtime(stage: &str, message: impl ToString) -> Self {
        Self {
            stage: stage.into(),
            message: message.to_string(),
            code: EXIT_RUNTIME,
        }
    }

    pub fn from_core(stage: &str, e: locus_core::LocusError) -> Self {
        if e.is_validation() {
            Self::validation(stage, e)
        } else {
            Self::runtime(stage, e)
        }
    }
}

impl From<locus_core::pipeline::StageError> for CliError {
    fn from(e: locus_core::pipeline::StageError) -> Self {
        CliError::from_core(e.stage, e.error)
    }
}

/// What a successful command reports through its exit status.
pub enum Outcome {
    Done,
    /// The selected flag rule accepts nothing.
    Empty,
}

fn one_line(s: &str) -> String {
    s.split('\n').map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("ERROR args: {}", one_line(&e.to_string()));
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match commands::run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Empty) => ExitCode::from(EXIT_EMPTY),
        Err(e) => {
            eprintln!("ERROR {}: {}", e.stage, one_line(&e.message));
            ExitCode::from(e.code)
        }
    }
}
