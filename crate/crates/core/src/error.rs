use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state too close to the origin (|q|^2 = {norm2:e})")]
    SingularOrigin { norm2: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("time {t} outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("log-variance diverged at sweep {sweep} (cumulative sum {value})")]
    Divergence { sweep: usize, value: f64 },

    #[error("rejection sampler exceeded {cap} iterations ({what})")]
    RejectionCap { cap: usize, what: &'static str },

    #[error("sampler failed at sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("parse error in {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for configuration/input problems,
    /// 3 for numerical or sampler failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse { .. } | Error::InvalidParameter(_) => 2,
            Error::EmptyInput(_) | Error::LengthMismatch { .. } | Error::OutOfRange { .. } => 2,
            Error::Io { .. } => 1,
            Error::SingularOrigin { .. }
            | Error::StepUnderflow { .. }
            | Error::Divergence { .. }
            | Error::RejectionCap { .. }
            | Error::Sweep { .. } => 3,
        }
    }
}
