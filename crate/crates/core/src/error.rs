use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("lambda = {lambda} is not in 2N + {d}")]
    Spectrum { lambda: u32, d: usize },
    #[error("singular time: sin t = 0 at t = {0}")]
    Singularity(f64),
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("accuracy target missed: {what} (achieved {achieved:.3e}, best value {best:.6e})")]
    Accuracy { what: String, achieved: f64, best: f64 },
    #[error("resource budget exceeded: {0}")]
    Resource(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
