use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("vertex index {index} out of range (pattern has {len} points)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("boundary search did not converge: {0}")]
    NumericalNonConvergence(String),

    #[error("pattern is empty")]
    EmptyPattern,

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("attractor set is empty")]
    EmptyAttractorSet,

    #[error("target (C={c:.4}, rho={rho:.4}) is infeasible; nearest feasible is (C={:.4}, rho={:.4})", nearest.0, nearest.1)]
    Infeasible {
        c: f64,
        rho: f64,
        nearest: (f64, f64),
    },

    #[error("rho = {rho} lies outside the calibrated range [{lo}, {hi}]")]
    RhoOutOfRange { rho: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed pattern file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
