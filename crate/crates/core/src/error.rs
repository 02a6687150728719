use thiserror::Error;

/// Errors raised by the library. Every fallible operation returns [`Result`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported manifold kind: {0}")]
    UnsupportedKind(String),
    #[error("nonpositive length {0}")]
    NonpositiveLength(f64),
    #[error("point out of chart: {0}")]
    PointOutOfChart(String),
    #[error("quadrature order {0} is below the minimum of 4")]
    OrderTooSmall(usize),
    #[error("quadrature rule under-resolves the basis (Gram deviation {0:.3e})")]
    UnderResolvedRule(f64),
    #[error("spectral tail bound {bound:.3e} exceeds tolerance {tol:.3e} at t = {t}")]
    TailBoundViolation { t: f64, bound: f64, tol: f64 },
    #[error("t = {0} is outside the validated range of this representation")]
    OutOfValidatedRange(f64),
    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
    #[error("kernel evaluated at coincident points")]
    CoincidentPoints,
    #[error("schedule does not converge: {0}")]
    NonConvergingSchedule(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("near-diagonal correction failed: {0}")]
    DiagonalCorrectionFailure(String),
    #[error("input is constant")]
    ConstantInput,
    #[error("exponent out of range: {0}")]
    ExponentOutOfRange(String),
    #[error("supercritical parameters: s*p = {sp} is not below n = {n}")]
    SupercriticalParameters { sp: f64, n: usize },
    #[error("exponent {0} is below 2")]
    ExponentBelow2(f64),
    #[error("exponent {0} is above 2")]
    ExponentAbove2(f64),
    #[error("amplitude {eps} exceeds the admissible bound {max}")]
    AmplitudeTooLarge { eps: f64, max: f64 },
    #[error("input is identically zero")]
    ZeroInput,
    #[error("descent diverged: quotient rose over {0} consecutive accepted steps")]
    DescentDiverged(usize),
    #[error("partition identity violated: {0}")]
    PartitionIdentityViolated(String),
    #[error("orthogonality residual {0:.3e} above tolerance")]
    OrthogonalityViolated(f64),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::TailBoundViolation { .. }
                | Error::QuadratureNotConverged(_)
                | Error::NonConvergingSchedule(_)
                | Error::DiagonalCorrectionFailure(_)
                | Error::DescentDiverged(_)
                | Error::UnderResolvedRule(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
