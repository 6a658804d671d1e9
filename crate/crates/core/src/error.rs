use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A configuration value is outside its allowed range.
    Config { field: &'static str, reason: String },
    EmptyDataset,
    /// Popularity statistics are unusable (for example every count is zero).
    DegenerateDataset(String),
    IndexOutOfRange { what: &'static str, index: usize, len: usize },
    Sampler(String),
    /// A parameter or gradient became NaN or infinite.
    Training { epoch: usize, step: usize, reason: String },
    Numerical(String),
    UndefinedMetric(&'static str),
}

impl Error {
    pub fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config { field, reason: reason.into() }
    }

    pub fn sampler(reason: impl Into<String>) -> Self {
        Error::Sampler(reason.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config { field, reason } => write!(f, "invalid config `{field}`: {reason}"),
            Error::EmptyDataset => f.write_str("dataset is empty"),
            Error::DegenerateDataset(msg) => write!(f, "degenerate dataset: {msg}"),
            Error::IndexOutOfRange { what, index, len } => {
                write!(f, "{what} index {index} out of range (len {len})")
            }
            Error::Sampler(msg) => write!(f, "sampler error: {msg}"),
            Error::Training { epoch, step, reason } => {
                write!(f, "training failed at epoch {epoch}, step {step}: {reason}")
            }
            Error::Numerical(msg) => write!(f, "numerical degeneracy: {msg}"),
            Error::UndefinedMetric(name) => write!(f, "metric `{name}` is undefined for this input"),
        }
    }
}

impl core::error::Error for Error {}
