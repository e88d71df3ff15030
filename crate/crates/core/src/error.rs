use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown registry entry: {0}")]
    UnknownRegistryEntry(String),
    #[error("kernel bound violation: {0}")]
    BoundViolation(String),
    #[error("edge mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("estimator input error: {0}")]
    Estimator(String),
    #[error("near-singular linear system (condition estimate {cond:.3e})")]
    NearSingular { cond: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
