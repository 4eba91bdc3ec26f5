use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate observation for asset {asset} at {date}")]
    Duplicate { date: String, asset: String },

    #[error("insufficient universe at {date}: {found} eligible assets, need at least 2")]
    InsufficientUniverse { date: String, found: usize },

    #[error("cannot split {len} observations with validation fraction {fraction}")]
    Split { len: usize, fraction: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("requested {requested} components but the numerical rank only allows {attainable}")]
    Rank { requested: usize, attainable: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at epoch {epoch} (step size {step_size})")]
    Divergence { epoch: usize, step_size: f64 },

    #[error("collinear regressors: {0}")]
    Collinear(String),

    #[error("insufficient data: need {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("covariance assembly failed: {0}")]
    Assembly(String),

    #[error("covariance matrix is ill-conditioned (condition number {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("hyperparameter tuning failed for every grid point: {}", .0.join("; "))]
    Tuning(Vec<String>),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("unmapped variable: {0}")]
    Mapping(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("{strategy}, window ending {date}: {source}")]
    Window {
        strategy: String,
        date: String,
        source: Box<Error>,
    },
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        Error::Parse {
            line,
            message: err.to_string(),
        }
    }
}
