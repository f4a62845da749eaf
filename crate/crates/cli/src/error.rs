use std::fmt;

use beacon_rewards::aggregate::AggregateError;
use beacon_rewards::beacon_client::CollectError;
use beacon_rewards::metrics::MetricsError;
use beacon_rewards::simulator::SimError;
use beacon_rewards::table::TableError;
use beacon_rewards::validate::ValidateError;

/// Failure of a subcommand, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad or inconsistent input data: exit 1.
    Data(String),
    /// Bad configuration or usage: exit 2.
    Config(String),
    /// Filesystem or network I/O: exit 3.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

fn by_io(is_io: bool, message: String) -> CliError {
    if is_io {
        CliError::Io(message)
    } else {
        CliError::Data(message)
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        by_io(e.is_io(), e.to_string())
    }
}

impl From<AggregateError> for CliError {
    fn from(e: AggregateError) -> Self {
        by_io(e.is_io(), e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        by_io(e.is_io(), e.to_string())
    }
}

impl From<ValidateError> for CliError {
    fn from(e: ValidateError) -> Self {
        by_io(e.is_io(), e.to_string())
    }
}

impl From<CollectError> for CliError {
    fn from(e: CollectError) -> Self {
        match e {
            CollectError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => CliError::Config(e.to_string()),
            SimError::Table(t) => t.into(),
        }
    }
}
