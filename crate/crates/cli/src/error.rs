use thiserror::Error;
use wavefront::{DiagnosticsError, PerturbationError, PotentialError, ShootingError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{message}")]
    NoConnection { reason: &'static str, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::NoConnection { .. } => 4,
            Self::Io(_) => 1,
        }
    }

    pub fn reason(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::NoConnection { reason, .. } => reason,
            Self::Numerical(_) => "numerical",
            Self::Io(_) => "io",
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }
}

impl From<ShootingError> for CliError {
    fn from(err: ShootingError) -> Self {
        match err {
            ShootingError::Infeasible(_)
            | ShootingError::NoBracket { .. }
            | ShootingError::NoConvergence(_)
            | ShootingError::ReturnsToEquilibrium { .. } => Self::NoConnection {
                reason: err.reason(),
                message: err.to_string(),
            },
            ShootingError::InvalidInput(_) => Self::Config(err.to_string()),
            _ => Self::Numerical(err.to_string()),
        }
    }
}

impl From<PotentialError> for CliError {
    fn from(err: PotentialError) -> Self {
        match err {
            PotentialError::Dimension { .. } | PotentialError::SearchBox(_) => Self::Config(err.to_string()),
            _ => Self::Numerical(err.to_string()),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(err: DiagnosticsError) -> Self {
        match err {
            DiagnosticsError::Shooting(e) => e.into(),
            DiagnosticsError::Precondition(_) => Self::Config(err.to_string()),
            _ => Self::Numerical(err.to_string()),
        }
    }
}

impl From<PerturbationError> for CliError {
    fn from(err: PerturbationError) -> Self {
        match err {
            PerturbationError::Invalid(_) => Self::Config(err.to_string()),
            PerturbationError::Potential(e) => e.into(),
            PerturbationError::Diagnostics(e) => e.into(),
        }
    }
}
