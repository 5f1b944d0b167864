use thiserror::Error;

use crate::copulas::CopulaFamily;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument left the open unit interval (or another admissible domain).
    #[error("domain error: {0}")]
    Domain(String),

    /// A copula parameter violates its family box.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The sign of Kendall's tau cannot be represented by the family.
    #[error("family {family} cannot represent tau = {tau}")]
    Incompatible { family: CopulaFamily, tau: f64 },

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("role error: {0}")]
    Role(String),

    /// Constant columns, empty samples, zero-mass regimes and similar.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid vine structure: {0}")]
    Structure(String),

    /// Every candidate family failed; carries one diagnostic per family.
    #[error("no family could be fitted: {}", .0.join("; "))]
    AllFitsFailed(Vec<String>),

    /// Two candidate regimes have identical quarter tail dependence.
    #[error("regime tie: {0}")]
    Tie(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
