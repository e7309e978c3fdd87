use std::path::PathBuf;
use std::process::ExitCode;

use fecg::error::Error;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MISSING_FILE: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    MissingFile(PathBuf),
    Config(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => CliError::Config(msg),
            e => CliError::Core(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::MissingFile(_) => EXIT_MISSING_FILE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_FILE,
            CliError::Core(_) => EXIT_FAILURE,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::MissingFile(_) => "missing_file",
            CliError::Config(_) => "config",
            CliError::Core(e) => match e {
                Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => "missing_file",
                Error::Io(_) => "io",
                Error::Corrupt(_) | Error::UnsupportedVersion(_) => "corrupt",
                Error::Malformed { .. } => "malformed",
                Error::Shape(_) => "shape",
                Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_) => "diverged",
                _ => "invalid_input",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string(),
            CliError::MissingFile(p) => format!("no such file: {}", p.display()),
            CliError::Config(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }

    /// Prints `error: kind=<kind> code=<n> message="<text>"` on one line.
    pub fn report(&self) -> ExitCode {
        let msg = self.message().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        eprintln!("error: kind={} code={} message=\"{msg}\"", self.kind(), self.code());
        ExitCode::from(self.code())
    }
}
