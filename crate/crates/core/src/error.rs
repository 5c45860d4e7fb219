use thiserror::Error;

use crate::geometry::Frame;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("configuration is in the {found:?} frame, expected {expected:?}")]
    WrongFrame { expected: Frame, found: Frame },

    #[error("points {i} and {j} coincide (infinite energy)")]
    CoincidentPoints { i: usize, j: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { what: &'static str, iterations: usize, residual: f64 },

    #[error("no equilibrium measure on this grid: {0}")]
    NoEquilibrium(String),

    #[error("truncation η = {eta} is under-resolved: {reason}")]
    UnderResolved { eta: f64, reason: String },

    #[error("window {0} is not covered by the background grid")]
    WindowOutsideGrid(String),

    #[error("incompatible Neumann data: relative defect {defect:.3e} exceeds {limit:.1e}")]
    IncompatibleNeumann { defect: f64, limit: f64 },

    #[error("screening inequality violated: boundary energy M = {m:.4e} exceeds bound {bound:.4e}")]
    ScreeningInequality { m: f64, bound: f64 },

    #[error("screening tile {tile}: {source}")]
    Tile {
        tile: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("screening: {0}")]
    Screening(String),

    #[error("chain too short for diagnostics: {0} samples (need at least 10)")]
    ChainTooShort(usize),

    #[error("test function support is not contained in the allowed square: {0}")]
    SupportViolation(String),

    #[error("too few points in window: {found} (need at least {needed})")]
    TooFewPoints { found: usize, needed: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed binary data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::WrongFrame { .. }
                | Error::Parse { .. }
                | Error::Format(_)
                | Error::SupportViolation(_)
                | Error::WindowOutsideGrid(_)
        )
    }
}
