use std::path::PathBuf;

use crate::cost::PowerModelViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid GOP structure: {0}")]
    InvalidGop(String),

    #[error("dependency cycle among frames at positions {0:?}")]
    CyclicDependency(Vec<u32>),

    #[error("frame at position {0} never appears in any current frame set")]
    FrameNeverCurrent(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "decode outcome drives the buffer of frame {position} (gop offset {gop_offset}) below zero"
    )]
    NegativeBuffer { gop_offset: u32, position: u32 },

    #[error("power model violates {} constraint(s): {}", .0.len(), join_violations(.0))]
    InvalidPowerModel(Vec<PowerModelViolation>),

    #[error("frequency {0} MHz is not in the configured frequency set")]
    UnknownFrequency(f64),

    #[error("state space has {states} states, above the cap of {cap}")]
    StateSpaceTooLarge { states: u128, cap: u128 },

    #[error(
        "value iteration did not converge within {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("slice cannot still be running: the empirical CDF is already 1 at {0} cycles")]
    SliceAlreadyDone(f64),

    #[error("trace does not cover frame at position {position} of GOP {gop}")]
    TraceUnderrun { gop: u64, position: u32 },

    #[error("malformed trace: {0}")]
    InvalidTrace(String),

    #[error("malformed policy file: {0}")]
    InvalidPolicy(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
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

    /// True for failures caused by the filesystem rather than by the inputs' content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

fn join_violations(v: &[PowerModelViolation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
