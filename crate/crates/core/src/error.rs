//! Error types shared by all modules.

use thiserror::Error;

/// Named hypotheses whose failure is reported as a precondition error rather
/// than a numerical one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precondition {
    /// The map is not unital completely positive within tolerance.
    Ucp,
    /// The map does not preserve the state within tolerance.
    PhiPreservation,
    /// The state is not diagonal.
    DiagonalState,
    /// Some diagonal corner of the state has zero mass.
    PositiveCorner,
    /// The candidate map's range functions oscillate too much at every
    /// admissible cover scale.
    RangeSmoothness,
    /// The state is not of the two-valued diagonal (pattern) form.
    PatternState,
}

impl std::fmt::Display for Precondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Precondition::Ucp => "Ucp",
            Precondition::PhiPreservation => "PhiPreservation",
            Precondition::DiagonalState => "DiagonalState",
            Precondition::PositiveCorner => "PositiveCorner",
            Precondition::RangeSmoothness => "RangeSmoothness",
            Precondition::PatternState => "PatternState",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch between operands: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("spectrum below required floor: min eigenvalue {min_eigenvalue:.3e} < {floor:.3e}")]
    SpectralFloorViolation { min_eigenvalue: f64, floor: f64 },

    #[error("eigensolver did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },

    #[error("index ({i}, {j}) out of range for size {n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not a state: {0}")]
    NotAState(String),

    #[error("invalid pattern levels: L = {level}, L0 = {balance_level}")]
    InvalidLevels { level: u32, balance_level: u32 },

    #[error("state is not grid-faithful: no spectral ladder value has positive mass in every cell")]
    NotGridFaithful,

    #[error("range cell clustering too coarse after {retries} refinements (worst sample {worst:.3e})")]
    RangeCellTooCoarse { retries: usize, worst: f64 },

    #[error("degenerate corner {corner}: ‖R(e_kk ⊗ 1)‖ = 0")]
    DegenerateCorner { corner: usize },

    #[error("precondition {which} failed: {detail}")]
    PreconditionFailed { which: Precondition, detail: String },

    #[error("cover construction failed: {0}")]
    CoverError(String),

    #[error("cover finer than the pattern balance scale: {0}")]
    PatternScaleError(String),

    #[error("probe norm {norm} exceeds 1 + 1e-12")]
    InvalidProbe { norm: f64 },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn precondition(which: Precondition, detail: impl Into<String>) -> Self {
        Error::PreconditionFailed {
            which,
            detail: detail.into(),
        }
    }

    /// True when the error signals a violated hypothesis or bad configuration
    /// rather than a failed numerical check.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::PreconditionFailed { .. }
                | Error::InvalidLevels { .. }
                | Error::NotGridFaithful
                | Error::PatternScaleError(_)
                | Error::InvalidArgument(_)
                | Error::InvalidProbe { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
