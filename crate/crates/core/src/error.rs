use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("system is not well-posed: det(I - A_M) = {det:e}")]
    NotWellPosed { det: f64 },

    #[error(
        "system has an atom at theta = 0; reduce it first with MatrixNbv::reduce_zero_atom"
    )]
    AtomAtZero,

    #[error("indeterminate root count: {0}")]
    IndeterminateCount(String),

    #[error("delays are not commensurate with base {base}: {detail}")]
    NotCommensurate { base: f64, detail: String },

    #[error("commensurate oracle requires an atoms-only system")]
    DensityPresent,

    #[error("hypothesis rho_HS >= 1 not met (estimated lower bound {rho_lower})")]
    HypothesisNotMet { rho_lower: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation diverged: non-finite state at t = {t}")]
    Diverged { t: f64 },

    #[error("internal error in destabilizer construction: {0}")]
    Construction(String),
}

pub type Result<T> = std::result::Result<T, Error>;
