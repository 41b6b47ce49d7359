use std::fmt;

/// CLI failures, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed or incomplete config. Exit code 2.
    Config(String),
    /// A solver rejected its input or diverged. Exit code 3.
    Numerical(gem_xpm::Error),
    /// Could not write outputs. Exit code 3.
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) | Self::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numerical(e) => write!(f, "numerical failure: {e}"),
            Self::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<gem_xpm::Error> for CliError {
    fn from(e: gem_xpm::Error) -> Self {
        use gem_xpm::Error as E;
        match e {
            E::InvalidParameter { .. } | E::InvalidGrid(_) | E::InvalidSchedule(_) | E::Protocol(_) => {
                Self::Config(e.to_string())
            }
            other => Self::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}
