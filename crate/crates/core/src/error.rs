use std::path::PathBuf;

use thiserror::Error;

use crate::types::{Entity, Ns};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: at `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("invalid {what}: {}", .violations.join("; "))]
    Invalid {
        what: &'static str,
        violations: Vec<String>,
    },

    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),

    #[error("entity {0} is not part of the conflict matrix")]
    UnknownEntity(Entity),

    #[error("kernel `{kernel}` binary ({binary_size} B) does not fit below the IMEM limit of {imem_limit} B")]
    OversizedKernel {
        kernel: String,
        binary_size: u64,
        imem_limit: u64,
    },

    #[error("exact search supports at most {max} entities, trace has {entities}")]
    TooLarge { entities: usize, max: usize },

    #[error("cluster {0} does not fit in the array")]
    DoesNotFit(usize),

    #[error("t={time}ns: cannot place {entity}: {reason}")]
    Unplaceable {
        entity: Entity,
        time: Ns,
        reason: String,
    },

    #[error("switch counts are all zero")]
    AllZero,

    #[error("placement plan does not match the array: {0}")]
    PlanMismatch(String),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Unplaceable { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
