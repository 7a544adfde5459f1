use thiserror::Error;

/// Problems with the map or mission files.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {what}: {source}")]
    Parse {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("duplicate agent id {0}")]
    DuplicateId(u32),
    #[error("agent {id}: radius must be positive, got {radius}")]
    NonPositiveRadius { id: u32, radius: f64 },
    #[error("agent {id}: {which} {point:?} is outside the map bounds")]
    OutOfBounds { id: u32, which: &'static str, point: [f64; 3] },
    #[error("agent {id}: start in collision")]
    StartInCollision { id: u32 },
    #[error("agent {id}: goal in collision")]
    GoalInCollision { id: u32 },
    #[error("scenario generation failed: {0}")]
    Generation(String),
}
