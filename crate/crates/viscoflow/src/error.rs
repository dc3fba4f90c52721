//! Error type shared across the solver library.

use std::path::PathBuf;

use crate::field::VectorField;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {what} at linear index {index}")]
    NonFinite { what: String, index: usize },

    #[error("non-positive density {value:e} at cell {index}")]
    NonPositiveDensity { index: usize, value: f64 },

    #[error("unsupported norm order q = {q}; Lq and W1q require 3 < q <= 6")]
    InvalidNormOrder { q: f64 },

    #[error(
        "CFL violation: dt = {dt:e} advects material {travel:e}, more than a quarter box; \
         retry with dt <= {advisory_dt:e}"
    )]
    CflViolation { dt: f64, travel: f64, advisory_dt: f64 },

    #[error(
        "momentum solve stalled at relative residual {final_residual:e} \
         after {iterations} iterations (target {tol:e})"
    )]
    SolveDiverged {
        iterations: usize,
        final_residual: f64,
        tol: f64,
        history: Vec<f64>,
        best: Box<VectorField>,
    },

    #[error("Picard iteration failed to contract within {iterations} iterations (last change {last_change:e})")]
    PicardDiverged { iterations: usize, last_change: f64 },

    #[error("velocity norm {norm:e} exceeded the iterate guard radius {guard:e}")]
    NormBlowup { norm: f64, guard: f64 },

    #[error(
        "dt underflow at t = {t:e}: {halvings} halvings brought dt to {dt:e} \
         without a converging step (floor {dt_min:e})"
    )]
    DtUnderflow { t: f64, dt: f64, dt_min: f64, halvings: usize },

    #[error("invariant failure at t = {t:e}: {detail}")]
    InvariantFailure { t: f64, detail: String },

    #[error("config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("convergence study level {level} (n = {n}): {source}")]
    Study {
        level: usize,
        n: usize,
        source: Box<Error>,
    },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
