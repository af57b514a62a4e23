use std::fmt;

use defocus_core::dataset::DataError;
use defocus_core::formats::FormatError;
use defocus_core::metrics::MetricError;
use defocus_core::nets::NetError;
use defocus_core::train::TrainError;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config (exit 1).
    Usage(String),
    /// Unreadable, missing or corrupt data (exit 2).
    Data(String),
    /// A self-check or internal invariant failed (exit 3).
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Check(m) => f.write_str(m),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Config { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Blur(_) => CliError::Usage(e.to_string()),
            DataError::Format(f) => f.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::CropTooLarge { .. } => CliError::Usage(e.to_string()),
            TrainError::EmptyDataset | TrainError::DegenerateMap { .. } | TrainError::MixedSizes(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Check(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        CliError::Data(e.to_string())
    }
}
