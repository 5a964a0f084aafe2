use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("insufficient parameters: {0}")]
    InsufficientParameters(String),

    #[error("frequency {omega:.6e} rad/s outside tabulated domain [{lo:.6e}, {hi:.6e}]")]
    OutOfDomain { omega: f64, lo: f64, hi: f64 },

    #[error("loop denominator |1 - L| = {magnitude:.3e} at omega = {omega:.6e} rad/s: on instability boundary")]
    InstabilityBoundary { omega: f64, magnitude: f64 },

    #[error("operation requires the {required} port")]
    UnsupportedPort { required: &'static str },

    #[error("nyquist band too narrow: |loop| = {magnitude:.3e} at band edge")]
    BandTooNarrow { magnitude: f64 },

    #[error(
        "nyquist sampling too coarse near omega = {omega:.6e} rad/s (phase jump {jump:.3} rad)"
    )]
    SamplingTooCoarse { omega: f64, jump: f64 },

    #[error("no suppressing gain at this homodyne phase (degenerate denominator {magnitude:.3e})")]
    NoSuppressingGain { magnitude: f64 },

    #[error("fixed point not found: {0}")]
    NoFixedPoint(String),

    #[error(
        "optomechanically unstable: gamma_opt = {gamma_opt:.6e} <= -gamma_m = {neg_gamma_m:.6e}"
    )]
    OptomechanicallyUnstable { gamma_opt: f64, neg_gamma_m: f64 },

    #[error("feedback loop unstable (winding number {winding})")]
    FeedbackUnstable { winding: i64 },

    #[error("effective linewidth must be positive, got {0:.6e}")]
    NonPositiveLinewidth(f64),

    #[error("inconsistent measurement set: {0}")]
    InconsistentMeasurement(String),

    #[error("singular linear system at omega = {omega:.6e} rad/s")]
    SingularSystem { omega: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureFailed(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("no stable point found within bounds")]
    NoStablePoint,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Errors that come from an unstable closed loop rather than from bad input.
    pub fn is_instability(&self) -> bool {
        matches!(
            self,
            Error::InstabilityBoundary { .. }
                | Error::OptomechanicallyUnstable { .. }
                | Error::FeedbackUnstable { .. }
                | Error::NonPositiveLinewidth(_)
                | Error::SingularSystem { .. }
                | Error::NoStablePoint
        )
    }
}
