use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mission instance: {0}")]
    InvalidInstance(String),

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("trajectories are not sampled on a common time grid: {0}")]
    MismatchedTimeGrids(String),

    #[error("leg {leg} has {samples} sample(s), at least 2 are required")]
    DegenerateLeg { leg: usize, samples: usize },

    #[error("clustering needs at least {needed} feature vectors, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown level `{0}`")]
    UnknownLevel(String),

    #[error("no motion word is available for the requested leg")]
    EmptyMotionDictionary,

    #[error("covariance lost positive definiteness")]
    NonPsdCovariance,

    #[error("leg did not reach its target within {steps} steps")]
    LegTimeout { steps: usize },

    #[error("simulation hit the step cap of {0} steps")]
    StepCapExceeded(usize),

    #[error("internal invariant violated: {0}")]
    InvariantBreach(String),

    #[error("unsupported schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
