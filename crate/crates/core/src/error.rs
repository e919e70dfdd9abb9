use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("conflicting laser width: {0}")]
    ConflictingWidth(String),

    #[error("degenerate two-photon state: every amplitude vanishes")]
    DegenerateState,

    #[error("singular tensor inversion: {0}")]
    Singular(String),

    #[error("quadrature did not converge (estimated relative error {estimate:e})")]
    QuadratureNotConverged { estimate: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-positive accidental counts at {delta_omega} cm^-1")]
    NonPositiveAccidental { delta_omega: f64 },

    #[error("rank-deficient Jacobian in fit: {0}")]
    RankDeficient(String),

    #[error("missing configuration `{0}`")]
    MissingConfiguration(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
