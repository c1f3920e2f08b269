use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?} ({context})")]
    Shape {
        left: (usize, usize),
        right: (usize, usize),
        context: &'static str,
    },

    #[error("length mismatch: expected {expected}, got {got} ({context})")]
    Length {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("row {row} has zero absolute sum")]
    DegenerateRow { row: usize },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("all weights are zero; cannot sample proportionally to magnitude")]
    DegenerateDistribution,

    #[error("budget of {max_kept} connections cannot hold one full chain of {layers} layers")]
    BudgetTooSmall { max_kept: usize, layers: usize },

    #[error("pruning saturated after {achieved} of {target} connections")]
    Saturated { achieved: usize, target: usize },

    #[error("empty trajectory for joint {joint}")]
    EmptyTrajectory { joint: usize },

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
