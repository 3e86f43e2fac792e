use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("preset `{preset}` has genus {expected}, got {got}")]
    GenusMismatch { preset: String, expected: usize, got: usize },
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown curve `{0}`")]
    UnknownCurve(String),
    #[error("degenerate pants triple ({0}, {1}, {2})")]
    DegenerateTriple(f64, f64, f64),
    #[error("point {0:?} is not in the open moment polytope")]
    OutsidePolytope(Vec<f64>),
    #[error("point is outside the compact set K (boundary distance {distance:.3e} < {margin:.3e})")]
    OutsideCompact { distance: f64, margin: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("operators do not commute (residual {0:.3e})")]
    NonCommuting(f64),
    #[error("joint eigenspace has dimension {0}, expected 1")]
    EigenspaceDimension(usize),
    #[error("backends disagree by {0:.3e}")]
    BackendDisagreement(f64),
    #[error("unstable finite-difference bracket (Richardson gap {0:.3e})")]
    UnstablePoint(f64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("non-generic pair: {0}")]
    NonGeneric(String),
    #[error("degenerate Lagrangian frame (Gram condition {0:.3e})")]
    FrameDegenerate(f64),
    #[error("non-transverse subspaces")]
    NonTransverse,
    #[error("no convergence: {0}")]
    NonConvergent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownPreset(_)
            | Error::GenusMismatch { .. }
            | Error::DimensionMismatch { .. }
            | Error::OutOfRange(_)
            | Error::Config(_)
            | Error::UnknownCurve(_)
            | Error::Unsupported(_)
            | Error::Json(_) => 2,
            Error::NonGeneric(_)
            | Error::OutsidePolytope(_)
            | Error::OutsideCompact { .. }
            | Error::DegenerateTriple(..) => 3,
            _ => 4,
        }
    }
}
