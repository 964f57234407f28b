use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("register has {0} subsystems; at most {max} are supported", max = crate::tensor_core::MAX_SUBSYSTEMS)]
    TooManySubsystems(usize),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid bipartition: {0}")]
    InvalidBipartition(String),
    #[error("state vector is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),
    #[error("Kraus set is not trace preserving (max deviation {0:e})")]
    NotTracePreserving(f64),
    #[error("invalid probabilities: {0}")]
    BadProbabilities(String),
    #[error("ensemble members do not share one layout")]
    LayoutMismatch,
    #[error("wrong shape: {0}")]
    WrongShape(String),
    #[error("parameter out of range: {0}")]
    BadParam(String),
}

pub type Result<T> = std::result::Result<T, Error>;
