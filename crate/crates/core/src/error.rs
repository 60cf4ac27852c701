use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The plant was evaluated outside the region where its equations are defined.
    #[error("vehicle model domain error: vx = {vx} m/s is below the {floor} m/s floor")]
    Domain { vx: f64, floor: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// All rule firing strengths vanished, so the blend is undefined.
    #[error("degenerate scheduling input: total firing strength is zero")]
    DegenerateFiring,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("failed to parse {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error("training diverged: SSE {sse:.6e} exceeds 10x the initial {initial:.6e}")]
    Divergence { sse: f64, initial: f64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("run ended: {0}")]
    EndOfRun(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, msg: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            msg: msg.to_string(),
        }
    }
}
