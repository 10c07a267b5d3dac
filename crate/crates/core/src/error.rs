use thiserror::Error;

/// Errors raised while evaluating charts, Lagrangians or integrating trajectories.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum HerglotzError {
    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: String },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Lagrangian is not regular (Hessian condition number {condition:e} exceeds {ceiling:e})")]
    Regularity { condition: f64, ceiling: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("integration failed at t = {time}: {source}")]
    IntegrationFailed {
        time: f64,
        #[source]
        source: Box<HerglotzError>,
    },

    #[error("maximum number of steps ({0}) exceeded")]
    MaxSteps(usize),
}

pub type Result<T> = std::result::Result<T, HerglotzError>;

pub(crate) fn check_dim(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(HerglotzError::DimensionMismatch {
            what: what.to_string(),
            expected,
            found,
        })
    }
}

pub(crate) fn check_finite_slice(context: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(HerglotzError::NonFinite {
            context: context.to_string(),
            index: i.to_string(),
        }),
    }
}
