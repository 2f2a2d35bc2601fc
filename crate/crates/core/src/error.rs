use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported modulation order {0}: expected 2, 4, 16 or 64")]
    UnsupportedOrder(usize),

    #[error("symbol index {index} out of range for a {order}-point constellation")]
    IndexOutOfRange { index: usize, order: usize },

    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),

    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),

    #[error("diffusion step {step} outside 1..={levels}")]
    StepOutOfRange { step: usize, levels: usize },

    #[error("channel noise std {sigma_ch} exceeds schedule maximum {sigma_max}")]
    SnrNotCovered { sigma_ch: f64, sigma_max: f64 },

    #[error("noise level must be positive, got {0}")]
    InvalidSigma(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("source dimension {0} is odd; two source values fill one complex symbol")]
    OddDimension(usize),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
