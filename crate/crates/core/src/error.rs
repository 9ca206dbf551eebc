use num_complex::Complex64;
use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix dimension {n} exceeds the dense limit {limit}")]
    DimensionTooLarge { n: usize, limit: usize },

    #[error("matrix is rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("columns are not orthonormal (residual {residual:e})")]
    NotOrthonormal { residual: f64 },

    #[error("matrix exponential overflowed")]
    Overflow,

    #[error("iterative eigensolver failed to converge: {0}")]
    NoConvergence(&'static str),

    #[error("linear system is numerically singular: {0}")]
    SingularSolve(&'static str),

    #[error("flow diverged at t = {time} (|U|_F = {norm:e})")]
    Diverged { time: f64, norm: f64 },

    #[error("eigenvalue gap at cut {r} is too small ({gap:e})")]
    GapTooSmall { r: usize, gap: f64 },

    #[error("cut at {cut} splits a complex-conjugate eigenvalue pair")]
    ConjugatePairSplit { cut: usize },

    #[error("flow did not converge after {attempts} attempts")]
    NotConverged { attempts: usize },

    #[error("basis is not invariant (residual {residual:e})")]
    NotInvariant { residual: f64 },

    #[error("neither block assignment of the augmented solution certifies as a singular pair")]
    BlockAmbiguity,

    #[error("coupling matrix is ill-conditioned (condition number {condition:e})")]
    IllConditionedCoupling { condition: f64 },

    #[error("evaluation point is within tolerance of the pole {pole}")]
    NearPole { pole: Complex64 },

    #[error("state matrix is not Hurwitz (spectral abscissa {abscissa})")]
    NotHurwitz { abscissa: f64 },

    #[error("reduced pair is not stabilizable: {0}")]
    NotStabilizable(&'static str),

    #[error("closed-loop verification failed (spectral abscissa {abscissa})")]
    DesignFailed { abscissa: f64 },

    #[error("design has no {0} gain")]
    MissingGain(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Error {
    Error::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
