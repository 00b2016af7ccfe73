use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inexact regime: no closed-form euclidean ball volume for r = {r} (wrap overlap)")]
    InexactRegime { r: f64 },

    #[error("unsupported pairing: {0}")]
    UnsupportedPairing(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("index {n} out of range (horizon {horizon})")]
    OutOfRange { n: usize, horizon: usize },

    #[error("degenerate support: every probed ball or annulus has zero measure")]
    DegenerateSupport,

    #[error("degenerate mass: cumulative target mass is zero at the final checkpoint")]
    DegenerateMass,

    #[error("need at least 2 scales for a regression, got {0}")]
    NeedTwoScales(usize),

    #[error("target sequence refused: {0}")]
    Assumption1Refused(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("configuration rejected:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// Numerical failures map to 3; everything else is an input problem (2).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalFailure(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
