use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid line {context}: {reason}")]
    InvalidLine { context: String, reason: String },

    #[error("invalid grid structure: {0}")]
    Structure(String),

    #[error("unknown bus id {0}")]
    UnknownBus(usize),

    #[error("invalid injection statistics at bus index {index}: {reason}")]
    InvalidStats { index: usize, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The covariance is singular or too ill-conditioned to invert directly.
    #[error("covariance is rank deficient: smallest eigenvalue {eigenvalue:e} <= {threshold:e}")]
    RankDeficient { eigenvalue: f64, threshold: f64 },

    #[error("ambiguous leaf attachment for bus {bus}: {detail}")]
    Ambiguity { bus: usize, detail: String },

    #[error("input too small: {0}")]
    TooSmall(String),

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("bus set mismatch: {0}")]
    BusSetMismatch(String),

    #[error("unknown built-in grid '{0}' (expected one of radial20, loopy20_c4, loopy20_c7, ieee14)")]
    UnknownGrid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable category, used in CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidLine { .. } => "invalid_line",
            Error::Structure(_) => "structure",
            Error::UnknownBus(_) => "unknown_bus",
            Error::InvalidStats { .. } => "invalid_stats",
            Error::Precondition(_) => "precondition",
            Error::Numerical(_) => "numerical",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Ambiguity { .. } => "ambiguity",
            Error::TooSmall(_) => "too_small",
            Error::Misuse(_) => "misuse",
            Error::BusSetMismatch(_) => "bus_set_mismatch",
            Error::UnknownGrid(_) => "unknown_grid",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
