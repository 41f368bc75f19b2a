//! Error categories mapped to process exit codes.
//!
//! 0 success, 1 usage, 2 data, 3 numeric failure.

use std::fmt;

use rkt_core::corpus::CorpusError;
use rkt_core::dataio::DataError;
use rkt_core::model::ModelError;
use rkt_core::numerics::NumericsError;
use rkt_core::relation::RelationError;
use rkt_core::synth::SynthError;
use rkt_core::traineval::TrainEvalError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RelationError> for CliError {
    fn from(e: RelationError) -> Self {
        match e {
            RelationError::MissingInput { .. } | RelationError::BadMethod(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BadConfig(_) => CliError::Usage(e.to_string()),
            ModelError::Numerics(n) => CliError::Numeric(n.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::Io(io) => CliError::Data(io.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<TrainEvalError> for CliError {
    fn from(e: TrainEvalError) -> Self {
        match e {
            TrainEvalError::Diverged { .. } => CliError::Numeric(e.to_string()),
            TrainEvalError::Numerics(n) => CliError::Numeric(n.to_string()),
            TrainEvalError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
