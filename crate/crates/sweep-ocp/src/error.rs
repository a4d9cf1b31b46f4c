use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum SweepError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("projection failed: {0}")]
    Projection(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("jacobian is not surjective (smallest singular value {sigma_min:.3e})")]
    Surjectivity { sigma_min: f64 },
    #[error("vector is not in the normal cone: {0}")]
    NotInCone(String),
    #[error("multiplier outside the normal cone domain at index {index}")]
    Domain { index: usize },
    #[error("simulation failed at step {step}: {source}")]
    Simulation {
        step: usize,
        #[source]
        source: Box<SweepError>,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unknown instance id '{0}'")]
    UnknownInstance(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SweepError>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(SweepError::Dimension {
            context,
            expected,
            got,
        })
    }
}
