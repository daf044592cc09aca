use thiserror::Error;

/// Errors raised by the simulator and its building blocks.
#[derive(Debug, Error)]
pub enum SimError {
    /// A scenario or call parameter is outside its valid range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke a documented precondition (e.g. CQI index out of range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The scheduler cannot act on the supplied state.
    #[error("scheduling error: {0}")]
    Scheduling(String),

    /// The requested MBSFN reservation exceeds what a radio frame can carry.
    #[error("infeasible: {required} MBSFN subframes per frame required, at most {max} allowed")]
    Infeasible { required: u32, max: u32 },

    /// Inputs that make a metric undefined (empty sample set, utilization >= 1, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Internal bookkeeping went inconsistent. Always a bug.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
