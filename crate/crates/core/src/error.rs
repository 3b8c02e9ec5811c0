use thiserror::Error;

/// Errors reported by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid platform index {index}: {reason}")]
    Index { index: usize, reason: String },

    #[error(
        "substitutes assumption violated for platforms ({i}, {j}): residual inner product {residual:e}"
    )]
    SubstitutesViolated { i: usize, j: usize, residual: f64 },

    #[error("exhaustive search over {k} platforms exceeds the limit of {limit}")]
    SearchLimitExceeded { k: usize, limit: usize },

    #[error("candidate profile infeasible: platform {platform} would need sigma^2 = {sigma_sq:e}")]
    InfeasibleCandidate { platform: usize, sigma_sq: f64 },

    #[error("privacy assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("degenerate mandate at sigma_bar = {sigma_bar}: entry threshold {threshold:e} exceeds cap {cap:e}")]
    DegenerateMandate {
        sigma_bar: f64,
        threshold: f64,
        cap: f64,
    },

    #[error("operation requires K = 2, got K = {0}")]
    UnsupportedK(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
