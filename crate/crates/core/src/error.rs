use thiserror::Error;

/// Errors raised by the twistor geometry and reflection routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TwistorError {
    /// A direction left the stereographic chart (it is at or near the south pole).
    #[error("chart escape: {0}")]
    ChartEscape(&'static str),

    #[error("congruence is not integrable (max residual {max_residual:e})")]
    NotIntegrable { max_residual: f64 },

    #[error("row-first and column-first integration disagree by {discrepancy:e}")]
    PathMismatch { discrepancy: f64 },

    #[error("ray does not meet the surface")]
    NoIntersection,

    #[error("incidence solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("square-root branch undefined for this direction")]
    BranchUndefined,

    #[error("surface passes through the focus (beta_0 = 0)")]
    DegenerateFocus,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unknown reference case: {0}")]
    UnknownCase(String),

    #[error("supplied derivative disagrees with finite differences by {mismatch:e}")]
    DerivativeMismatch { mismatch: f64 },

    #[error("parameter {0} lies outside the surface domain")]
    OutsideDomain(String),
}

pub type Result<T, E = TwistorError> = std::result::Result<T, E>;
