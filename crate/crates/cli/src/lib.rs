//! Command-line workflow around the `bdcsense` library: layered
//! configuration, the five subcommands, and artifact writing.
//!
//! Exposed as a library so integration tests can drive the exact command
//! implementations the binary runs.

pub mod commands;
pub mod config;

use thiserror::Error;

/// Process-level error classification; the exit code encodes the class
/// (0 success, 1 validation, 2 numerical, 3 I/O).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<bdcsense::motor::MotorError> for CliError {
    fn from(e: bdcsense::motor::MotorError) -> Self {
        use bdcsense::motor::MotorError::*;
        match e {
            NonFinite { .. } | NoEquilibrium { .. } | NotConverged { .. } => {
                CliError::Numerical(e.to_string())
            }
            Io(io) => CliError::Io(io.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<bdcsense::dataset::DatasetError> for CliError {
    fn from(e: bdcsense::dataset::DatasetError) -> Self {
        match e {
            bdcsense::dataset::DatasetError::Io(io) => CliError::Io(io.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<bdcsense::cfnn::CfnnError> for CliError {
    fn from(e: bdcsense::cfnn::CfnnError) -> Self {
        match e {
            bdcsense::cfnn::CfnnError::Io(io) => CliError::Io(io.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<bdcsense::rprop::RpropError> for CliError {
    fn from(e: bdcsense::rprop::RpropError) -> Self {
        match e {
            bdcsense::rprop::RpropError::NonFiniteError(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<bdcsense::pipeline::PipelineError> for CliError {
    fn from(e: bdcsense::pipeline::PipelineError) -> Self {
        use bdcsense::pipeline::PipelineError::*;
        match e {
            Diverged { .. } => CliError::Numerical(e.to_string()),
            Fold { fold, source } => {
                let inner: CliError = (*source).into();
                match inner {
                    CliError::Numerical(m) => CliError::Numerical(format!("fold {fold}: {m}")),
                    CliError::Io(m) => CliError::Io(format!("fold {fold}: {m}")),
                    CliError::Validation(m) => CliError::Validation(format!("fold {fold}: {m}")),
                }
            }
            Cfnn(inner) => inner.into(),
            Rprop(inner) => inner.into(),
            Dataset(inner) => inner.into(),
            Io(io) => CliError::Io(io.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
