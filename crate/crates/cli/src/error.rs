use std::fmt;

use hemocast_core::Error;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    /// Prefixes the message with where it happened.
    pub fn context(self, what: impl fmt::Display) -> Self {
        CliError {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

fn code_of(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::UnknownArchitecture(_) => EXIT_USAGE,
        Error::MalformedRow { .. }
        | Error::MissingColumn(_)
        | Error::SampleIndex { .. }
        | Error::ShapeMismatch { .. }
        | Error::EmptyDataset
        | Error::ZeroVariance
        | Error::Geometry(_)
        | Error::Format(_) => EXIT_DATA,
        Error::Io(_) => EXIT_IO,
        Error::Candidate { source, .. } => code_of(source),
        _ => EXIT_NUMERIC,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: code_of(&e),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
