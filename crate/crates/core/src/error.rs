use std::path::PathBuf;

use crate::solvers::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("field contains non-finite values")]
    NonFiniteField,

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid exponent {value}: {reason}")]
    InvalidExponent { value: f64, reason: &'static str },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("fractional multiplier is singular at t = 0")]
    SingularAtZero,

    #[error("no checkpoint recorded at t = {0}")]
    NoCheckpoint(f64),

    #[error("fit window is grid-saturated: {0}")]
    SaturatedRegime(String),

    #[error("insufficient data: {have} usable points, need {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate estimate: every sample had a zero numerator (floor {floor})")]
    DegenerateEstimate { floor: f64 },

    #[error("step size underflow at t = {t}: dt = {dt:e}")]
    StiffnessFailure {
        t: f64,
        dt: f64,
        partial: Option<Box<Trajectory>>,
    },

    #[error("bisection bracket failure on [{lo}, {hi}]: {reason}")]
    BracketError { lo: f64, hi: f64, reason: String },

    #[error("Picard iteration stagnated: defect {defect:e} after {sweeps} sweeps, empirical Lipschitz ratio {ratio}")]
    NoContraction {
        defect: f64,
        sweeps: usize,
        ratio: f64,
    },

    #[error("horizon {horizon} exceeds the contraction bound {bound}")]
    HorizonTooLong { horizon: f64, bound: f64 },

    #[error("no blow-up signal in trajectory")]
    NoBlowupSignal,

    #[error("small-data pairing violated: {lhs} > delta* = {delta_star}")]
    SmallDataViolation { lhs: f64, delta_star: f64 },

    #[error("unknown {kind} '{name}' (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("bad checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn params(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
