use std::fmt;

use scsr::{ErrorCategory, ScsrError};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVALID_FILE: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

pub const EXIT_CODES_HELP: &str = "\
Exit codes:
  0  success
  1  other failure (I/O, e.g. a missing input file)
  2  usage error (unknown flag, bad value)
  3  invalid input file (bad magic, version, truncation, malformed text)
  4  failed precondition (configuration, shapes, too few subjects)
  5  numerical failure (non-finite values, non-convergence)

Errors are printed as a single line: error[<category>]: <message>";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(ScsrError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.category().as_str(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e.category() {
                ErrorCategory::InvalidFile => EXIT_INVALID_FILE,
                ErrorCategory::Precondition => EXIT_PRECONDITION,
                ErrorCategory::Numeric => EXIT_NUMERIC,
                ErrorCategory::Io => EXIT_OTHER,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        };
        let one_line = msg.lines().map(str::trim).collect::<Vec<_>>().join("; ");
        write!(f, "error[{}]: {}", self.category(), one_line)
    }
}

impl From<ScsrError> for CliError {
    fn from(e: ScsrError) -> Self {
        CliError::Core(e)
    }
}
