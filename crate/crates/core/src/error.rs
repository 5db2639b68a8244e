//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A lattice or mode-basis parameter is out of its admissible range.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Requested fermion number does not fit the mode count.
    #[error("fermion number {omega} outside 0..={max}")]
    OmegaOutOfRange { omega: u32, max: u32 },

    /// A state and an operator were built over different sector bases.
    #[error("sector mismatch between state and operator")]
    SectorMismatch,

    /// An assembled operator failed the hermiticity check.
    #[error("operator not hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    /// A state vector with zero norm cannot be normalized.
    #[error("state vector has zero norm")]
    ZeroState,

    /// The guidance or jump law was evaluated where the density vanishes.
    #[error("node visit at t={time}: density {weight:.3e} below {epsilon:.3e}")]
    NodeVisit { time: f64, weight: f64, epsilon: f64 },

    /// Adaptive step control hit its floor (diverging exit rate or node).
    #[error("step floor reached at t={time}: rate/step {rate:.3e}")]
    StepFloor { time: f64, rate: f64 },

    /// Statistics over an empty trajectory ensemble are undefined.
    #[error("empty ensemble")]
    EmptyEnsemble,

    /// A trajectory is missing a sample at a requested checkpoint time.
    #[error("trajectory has no sample at t={0}")]
    MissingCheckpoint(f64),

    /// Wrong particle count for the requested operation.
    #[error("operation requires omega={expected}, state has omega={found}")]
    WrongQuantumCount { expected: usize, found: usize },

    /// A configuration or mode label is not part of the basis.
    #[error("label not in basis: {0}")]
    UnknownLabel(String),
}

pub type Result<T> = std::result::Result<T, Error>;
