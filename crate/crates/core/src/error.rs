use thiserror::Error;

/// Errors raised by the simulator and the analytical toolkit.
#[derive(Debug, Error)]
pub enum LisError {
    /// A configuration value violates its contract. `key` names the offending config key.
    #[error("invalid configuration `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("infeasible placement: LIS {lis} could not place device {device} after {attempts} attempts")]
    InfeasiblePlacement {
        lis: usize,
        device: usize,
        attempts: usize,
    },

    #[error("index out of range: {what} = {index}, limit {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    /// A quantity hit a degenerate value (zero interference, zero gain, ...).
    #[error("degenerate value: {0}")]
    Degenerate(String),

    #[error("non-finite objective at {at}")]
    NonFinite { at: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LisError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        LisError::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(self, LisError::InvalidConfig { .. })
    }
}

pub type Result<T> = std::result::Result<T, LisError>;
