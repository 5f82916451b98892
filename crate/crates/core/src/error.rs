use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("special function domain error: {0}")]
    Domain(String),

    #[error("special function range error: {0}")]
    Range(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("near-resonance: {0}")]
    NearResonance(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("impedance class error: {0}")]
    Class(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
