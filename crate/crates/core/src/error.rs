use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate geometry: co-located transceivers")]
    DegenerateGeometry,
    #[error("device {device} is not covered by any active UAV")]
    NoCoverage { device: usize },
    #[error("infeasible path {path:?}: {reason}")]
    InfeasiblePath { path: Vec<usize>, reason: String },
    #[error("no feasible path for task {task}")]
    NoFeasiblePath { task: u64 },
    #[error("every offloading action is masked")]
    ExhaustedActions,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("malformed message: {0}")]
    Wire(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
