//! Error type shared by every module of the crate.
//!
//! Errors fall into two families, and the split drives the CLI exit codes:
//! [`Error::is_validation`] covers rejected inputs (bad dimensions, rank
//! deficiency, unstable nominal loops, out-of-domain parameters), while
//! numerical failures (eigensolver breakdown, quadrature that cannot reach
//! tolerance, budget exhaustion) are everything else.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Which input matrix an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixId {
    /// Input matrix B (must have full column rank).
    B,
    /// Output matrix C (must have full row rank).
    C,
}

impl std::fmt::Display for MatrixId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatrixId::B => write!(f, "B"),
            MatrixId::C => write!(f, "C"),
        }
    }
}

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix shapes are mutually inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix that must be full rank is rank deficient at the working
    /// tolerance.
    #[error("matrix {matrix} is rank deficient: rank {rank} < {required} (tolerance {tol:.3e})")]
    RankDeficient {
        matrix: MatrixId,
        rank: usize,
        required: usize,
        tol: f64,
    },

    /// A matrix that must be Hurwitz is not.
    #[error("matrix is not Hurwitz: spectral abscissa {alpha:.6e} >= 0")]
    NotStable { alpha: f64 },

    /// A matrix that must be symmetric is not.
    #[error("matrix is not symmetric: max |M - M^T| entry {asymmetry:.3e} exceeds {tol:.3e}")]
    NotSymmetric { asymmetry: f64, tol: f64 },

    /// A scalar argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A perturbation norm exceeds the stated bound.
    #[error("perturbation norm {norm:.6e} exceeds the bound rho = {rho:.6e}")]
    NormExceedsBound { norm: f64, rho: f64 },

    /// The zero perturbation has no direction coordinates.
    #[error("zero perturbation: coordinates are undefined for delta = 0")]
    ZeroPerturbation,

    /// Coordinates ask for energy outside the cancellable subspace, but that
    /// subspace complement is empty (m*p = n^2).
    #[error("degenerate coverage: m*p = n^2 leaves no residual subspace, theta must be 0")]
    DegenerateCoverage,

    /// Explicitly materializing an n^2 x n^2 operator was refused.
    #[error("state dimension {n} exceeds the cap {cap} for explicit projector assembly; use the implicit interfaces")]
    DimensionOverflow { n: usize, cap: usize },

    /// LAPACK failed to converge or returned an invalid result.
    #[error("eigensolver/SVD failure: {0}")]
    EigenFailure(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    /// An iteration budget was exhausted before convergence.
    #[error("budget exceeded: {context} after {iterations} iterations")]
    BudgetExceeded { context: String, iterations: usize },

    /// Internal cross-check between two evaluation routes disagreed.
    #[error("numerical inconsistency: {0}")]
    Numerical(String),

    /// The integration step is too coarse for the system's time scale.
    #[error("step too large: dt * ||M||_2 = {product:.3e} > 1; shrink dt below {max_dt:.3e}")]
    StepTooLarge { product: f64, max_dt: f64 },

    /// A grid operation received no cells.
    #[error("empty grid")]
    EmptyGrid,

    /// Two trajectories do not share a time grid.
    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    /// Model file I/O failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Model file is not valid JSON.
    #[error("model parse error: {0}")]
    Parse(#[from] serde_json::Error),

    /// Model file is valid JSON but violates the schema.
    #[error("model schema error: {0}")]
    Schema(String),
}

impl Error {
    /// True for errors that mean "the input was rejected" rather than "the
    /// computation broke down". The CLI maps validation errors to exit code 2
    /// and numerical errors to exit code 3.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::RankDeficient { .. }
                | Error::NotStable { .. }
                | Error::NotSymmetric { .. }
                | Error::Domain(_)
                | Error::NormExceedsBound { .. }
                | Error::ZeroPerturbation
                | Error::DegenerateCoverage
                | Error::DimensionOverflow { .. }
                | Error::EmptyGrid
                | Error::GridMismatch(_)
                | Error::Schema(_)
        )
    }
}
