//! Exit-code classification.

use std::path::Path;

use follownet::Error;
use thiserror::Error;

/// A failed run. The variant decides the process exit code: analysis
/// failures exit with 1, everything caused by the inputs or the
/// invocation exits with 2.
#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Analysis(String),

    #[error("stage `{stage}` needs {missing}; run `follownet {run_first}` first")]
    Prerequisite {
        stage: &'static str,
        missing: String,
        run_first: &'static str,
    },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Analysis(_) => 1,
            Failure::Input(_) | Failure::Prerequisite { .. } => 2,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    /// Wraps a core error raised while reading `path`.
    pub fn in_file(path: &Path, err: Error) -> Self {
        match Failure::from(err) {
            Failure::Input(m) => Failure::Input(format!("{}: {m}", path.display())),
            other => other,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure::Input(format!("{}: {err}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let msg = err.to_string();
        match err {
            Error::MalformedRecord { .. }
            | Error::EmptyDataset(_)
            | Error::WeekOutOfRange { .. }
            | Error::ScoreOutOfRange { .. }
            | Error::InvalidConfig(_)
            | Error::Io(_)
            | Error::Csv(_) => Failure::Input(msg),
            Error::DegenerateScope(_)
            | Error::Undefined(_)
            | Error::InvalidGraph(_)
            | Error::Construction(_)
            | Error::Separation(_)
            | Error::Singular(_)
            | Error::InsufficientData(_) => Failure::Analysis(msg),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(err: csv::Error) -> Self {
        Failure::from(Error::Csv(err))
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;
