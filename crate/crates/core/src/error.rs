use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigViolation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box: width and height must be positive (got w={w}, h={h})")]
    InvalidBox { w: f64, h: f64 },

    #[error("non-finite world coordinate")]
    NonFiniteWorld,

    #[error("invalid feature weights: {0}")]
    InvalidWeights(String),

    #[error("invalid configuration: {}", format_violations(.0))]
    InvalidConfig(Vec<ConfigViolation>),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("numerical domain error: {0}")]
    Numerical(String),

    #[error("histogram bin mismatch: {0} vs {1}")]
    BinMismatch(usize, usize),

    #[error("point trajectory too short: {0} points")]
    ShortTrajectory(usize),

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error("frames out of order: frame {got} after frame {last}")]
    StreamOrder { last: u32, got: u32 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(v: &[ConfigViolation]) -> String {
    v.iter()
        .map(|v| format!("{} ({})", v.field, v.message))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
