use std::io;

use pairlab::agent::AgentError;
use pairlab::backtest::BacktestError;
use pairlab::econometrics::StatsError;
use pairlab::env::EnvError;
use pairlab::grid::GridError;
use pairlab::ledger::LedgerError;
use pairlab::market_data::DataError;
use pairlab::spread::SpreadError;
use thiserror::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::BadQuantile(_) | DataError::BadFactor(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::UnsupportedSignificance(_) => CliError::Config(e.to_string()),
            StatsError::SeriesTooShort { .. } | StatsError::InsufficientData(_) => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SpreadError> for CliError {
    fn from(e: SpreadError) -> Self {
        match e {
            SpreadError::InvalidThresholds { .. } | SpreadError::WindowTooShort(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::BadFeeRate(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::Spread(e) => e.into(),
            BacktestError::Ledger(e) => e.into(),
            BacktestError::SeriesTooShort { .. } => CliError::Data(e.to_string()),
            BacktestError::StartBeforeWarmUp { .. } | BacktestError::NonPositiveCash => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::EmptyGrid | GridError::BadSpec => CliError::Config(e.to_string()),
            GridError::SeriesTooShort { .. } => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::InvalidConfig(_) => CliError::Config(e.to_string()),
            EnvError::SeriesTooShort { .. } => CliError::Data(e.to_string()),
            EnvError::Ledger(e) => e.into(),
            EnvError::Spread(e) => e.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Env(e) => e.into(),
            AgentError::Checkpoint(_) | AgentError::HeadMismatch { .. } | AgentError::InputMismatch { .. } => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}
