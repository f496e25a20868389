use std::path::PathBuf;

use convexo::control::ControlError;
use convexo::envelope::EnvelopeError;
use convexo::ode::OdeError;
use convexo::reach::BoundError;
use convexo::relax::RelaxError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    /// 2 for bad input or files, 3 for numeric and domain failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<EnvelopeError> for CliError {
    fn from(e: EnvelopeError) -> Self {
        match e {
            EnvelopeError::InvalidGrid(_) | EnvelopeError::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            e => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<OdeError> for CliError {
    fn from(e: OdeError) -> Self {
        match e {
            OdeError::InvalidStep(_) | OdeError::ControlDimension { .. } => CliError::Config(e.to_string()),
            e => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<ControlError> for CliError {
    fn from(e: ControlError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<BoundError> for CliError {
    fn from(e: BoundError) -> Self {
        match e {
            BoundError::Ode(e) => e.into(),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<RelaxError> for CliError {
    fn from(e: RelaxError) -> Self {
        match e {
            RelaxError::Envelope(e) => e.into(),
            RelaxError::Ode(e) => e.into(),
            RelaxError::Control(e) => e.into(),
            RelaxError::Unsupported(msg) => CliError::Config(msg),
            e @ RelaxError::EmptyFamily => CliError::Config(e.to_string()),
        }
    }
}
