use thiserror::Error;

/// Errors produced by the steerer library.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the arguments was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Irrep decomposition could not reconstruct the input matrix.
    #[error("decomposition failed: reconstruction residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    DecompositionFailed { residual: f64, tolerance: f64 },

    /// Fewer correspondences than description dimensions.
    #[error("underdetermined fit: {have} correspondences for dimension {need}")]
    Underdetermined { have: usize, need: usize },

    /// The cross-covariance matrix is rank deficient.
    #[error("degenerate fit: cross-covariance has rank {rank} < {dim}")]
    DegenerateFit { rank: usize, dim: usize },

    /// An angle outside the principal branch of the matrix logarithm.
    #[error("branch ambiguity: |angle| = {angle:.6} rad is not below pi")]
    BranchAmbiguity { angle: f64 },

    /// The principal real matrix logarithm does not exist or failed to converge.
    #[error("matrix logarithm failed: {0}")]
    LogmFailed(String),

    /// Inner products are not preserved between the two sample sets.
    #[error("gram hypothesis violated at pair ({i}, {j}): deviation {deviation:.3e} > {tolerance:.1e}")]
    HypothesisViolated {
        i: usize,
        j: usize,
        deviation: f64,
        tolerance: f64,
    },

    /// An iterative eigenvalue solver did not converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
