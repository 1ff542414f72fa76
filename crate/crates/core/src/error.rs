use thiserror::Error;

/// Errors raised anywhere in the discriminant pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (factorization hit a non-positive pivot)")]
    NotPositiveDefinite,

    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {gap:.3e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("direction vector is zero")]
    ZeroDirection,

    #[error("mean difference vector is zero")]
    ZeroMeanDifference,

    #[error("eigenvalue {value} at position {index} is not positive")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("feature subset is empty")]
    EmptySubset,

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("class {class} has {count} samples, at least {required} required")]
    DegenerateClass {
        class: u8,
        count: usize,
        required: usize,
    },

    #[error("sample {row} is constant and cannot be standardized")]
    ConstantSample { row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("screening base set is empty")]
    EmptyBase,

    #[error("degenerate direction: w'Sw = {quad:.3e} is not positive")]
    DegenerateDirection { quad: f64 },

    #[error("L1 budget {c} is below the feasibility floor {floor}")]
    Infeasible { c: f64, floor: f64 },

    #[error("dimension {p} exceeds the enumeration limit {max}")]
    DimensionTooLarge { p: usize, max: usize },

    #[error("no sign pattern satisfied the optimality conditions")]
    NoKktCandidate,

    #[error("correlation {rho} does not give a positive definite block of size {size}")]
    InvalidRho { rho: f64, size: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
