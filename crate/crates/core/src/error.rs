use thiserror::Error;

/// Errors raised by the channel, estimation and optimization layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A variance went non-positive or non-finite inside an iterative estimator.
    #[error("numerical failure at iteration {iteration}: {detail}")]
    NumericalFailure { iteration: usize, detail: String },

    #[error("infeasible: {0}")]
    Infeasible(#[from] Infeasibility),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

/// Which constraint of the resource problem could not be met.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Infeasibility {
    #[error("no BS blocklength meets the UAV decoding-error threshold even at full BS power")]
    BsLayer,
    #[error("robot {robot} needs normalized UAV power {required:.4} > 1")]
    UavMinimumPower { robot: usize, required: f64 },
    #[error("robot {robot} has no blocklength meeting its decoding-error threshold")]
    RobotBlocklength { robot: usize },
    #[error("cascade channel gain is zero")]
    ZeroCascadeGain,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
