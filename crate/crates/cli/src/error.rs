use std::fmt;
use std::path::Path;

use softforce::Error;

/// Error categories, each with its own exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Io,
    Format,
    Data,
    Scorer,
    Internal,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::Io => 3,
            Kind::Format => 4,
            Kind::Data => 5,
            Kind::Scorer => 6,
            Kind::Internal => 70,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Io => "io",
            Kind::Format => "format",
            Kind::Data => "data",
            Kind::Scorer => "scorer",
            Kind::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new(Kind::Usage, message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::new(Kind::Io, format!("{}: {e}", path.display()))
    }

    /// The single diagnostic line written to stderr.
    pub fn line(&self) -> String {
        let flat: Vec<&str> = self.message.split_whitespace().collect();
        format!("softforce: {}: {}", self.kind.name(), flat.join(" "))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.name(), self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Io { .. } => Kind::Io,
            Error::Parse { .. } | Error::LineCountMismatch { .. } => Kind::Format,
            Error::Protocol(_) | Error::InvalidDistribution(_) => Kind::Scorer,
            Error::Invariant(_) => Kind::Internal,
            _ => Kind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
