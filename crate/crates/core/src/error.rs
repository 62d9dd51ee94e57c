use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Solver produced a non-finite or exploding iterate. Carries the last
    /// iteration index that was still finite.
    #[error("divergence at iteration {last_finite_t}: {detail}")]
    Divergence { last_finite_t: usize, detail: String },

    /// Iterative routine ran out of its iteration budget. Carries the last
    /// estimate or residual so callers can still inspect it.
    #[error("no convergence after {iterations} iterations (last estimate {estimate})")]
    Convergence { iterations: usize, estimate: f64 },

    /// A rank-r iterate lost its positive spectrum.
    #[error("degenerate iterate at t={t}, member m={m}")]
    DegenerateIterate { t: usize, m: usize },

    /// Premise-respecting instance generation exceeded its resampling cap.
    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
