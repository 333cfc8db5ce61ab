use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{label}: point {point} lies outside the domain [{lo}, {hi}]")]
    Domain { label: String, point: f64, lo: f64, hi: f64 },

    #[error("{label}: non-finite value at {point}")]
    NonFinite { label: String, point: f64 },

    #[error("target {target} outside the bracket image [{lo}, {hi}]")]
    OutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("function is not monotone on the bracket near {at}")]
    NonMonotone { at: f64 },

    #[error("{label}: domain is unbounded; restrict it before scanning")]
    UnboundedDomain { label: String },

    #[error("density is not positive at {point:?} (value {value})")]
    DensityNotPositive { point: Vec<f64>, value: f64 },

    #[error("region index {k} out of range 1..={len}")]
    IndexOutOfRange { k: usize, len: usize },

    #[error("region B_{k} is unbounded; refusing to sample it")]
    UnboundedRegion { k: usize },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
