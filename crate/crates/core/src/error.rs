use thiserror::Error;

/// Errors raised across the laboratory.
///
/// Variants are grouped by [`ErrorKind`] so front ends can map them onto
/// exit codes without matching every case.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("integration did not converge after {halvings} step halvings (last defect {defect:.3e}, tol {tol:.3e})")]
    Integration {
        halvings: u32,
        defect: f64,
        tol: f64,
    },

    #[error(
        "level crossing: ground cluster dimension changed from {expected} to {found} at t = {time}"
    )]
    LevelCrossing {
        expected: usize,
        found: usize,
        time: f64,
    },

    #[error("gap closure: instantaneous gap {gap:.3e} at t = {time}")]
    GapClosure { gap: f64, time: f64 },

    #[error("ill-conditioned projector derivative: gap {gap:.3e} at t = {time}")]
    IllConditioned { gap: f64, time: f64 },

    #[error("intertwining defect {defect:.3e} exceeds {limit:.3e}; refine the time grid")]
    Intertwining { defect: f64, limit: f64 },

    #[error("checkpoint misalignment: {0}")]
    Alignment(String),

    #[error("only {crossed} level(s) crossed the threshold; at least 2 are required")]
    InsufficientCrossings {
        crossed: usize,
        crossing_times: Vec<Option<f64>>,
    },

    #[error("non-finite objective: {0}")]
    NonFinite(String),

    #[error("bound violated at {violations} point(s), min margin {min_margin:.3e}")]
    BoundViolation { violations: usize, min_margin: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification of a [`LabError`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input, bad configuration, broken preconditions.
    Validation,
    /// The numerics failed: no convergence, crossings, closed gaps.
    Numerical,
    /// A rigorous bound was observed to fail.
    BoundViolation,
}

impl LabError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            LabError::Domain(_)
            | LabError::Validation(_)
            | LabError::Precondition(_)
            | LabError::Config(_)
            | LabError::Io(_)
            | LabError::Json(_) => ErrorKind::Validation,
            LabError::BoundViolation { .. } => ErrorKind::BoundViolation,
            _ => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
