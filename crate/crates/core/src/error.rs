use thiserror::Error;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("week {week} outside 1..={max}")]
    WeekOutOfRange { week: u32, max: u32 },

    #[error("score {score} for agent {agent} in week {week} outside [0, 100]")]
    ScoreOutOfRange { agent: String, week: u32, score: f64 },

    #[error("degenerate scope: {0}")]
    DegenerateScope(String),

    #[error("undefined {0}")]
    Undefined(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("separation: {0}")]
    Separation(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
