use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("environment `{0}` has no labeled rows")]
    NoLabels(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("environment `{env}` has non-positive weight {weight}")]
    NonPositiveWeight { env: String, weight: f64 },

    #[error("at least {required} environments required, got {got}")]
    TooFewEnvironments { required: usize, got: usize },

    #[error("missing imputation: {0}")]
    MissingImputation(String),

    #[error("oracle method needs fully labeled data (environment `{0}` has missing outcomes)")]
    OracleNeedsLabels(String),

    #[error("singular system on support {0}")]
    SingularSystem(String),

    #[error("{p} covariates exceed exhaustive search limit of {max}")]
    TooManyCovariates { p: usize, max: usize },

    #[error("too few training rows: need at least {required}, got {got}")]
    TooFewRows { required: usize, got: usize },

    #[error("no imputation model for environment {0}")]
    MissingModel(usize),

    #[error("masking ratio {ratio} would remove all {n} labels")]
    AllMissing { ratio: f64, n: usize },

    #[error("need at least 2 distinct months, found {0}")]
    InsufficientMonths(usize),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch(_)
            | Error::NoLabels(_)
            | Error::NonFinite(_)
            | Error::NonPositiveWeight { .. }
            | Error::TooFewEnvironments { .. }
            | Error::OracleNeedsLabels(_)
            | Error::AllMissing { .. }
            | Error::InsufficientMonths(_) => 2,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Config(_)
            | Error::UnknownName { .. }
            | Error::Json(_) => 3,
            _ => 4,
        }
    }
}
