use thiserror::Error;

/// Errors surfaced by geometry, map, and iteration operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Combination parameter outside the closed unit interval.
    #[error("combination parameter {0} outside [0, 1]")]
    LambdaOutOfRange(f64),

    /// A point was used with a space model that did not produce it.
    #[error("point/space mismatch: space is {space}, point is {point}")]
    SpaceMismatch {
        space: &'static str,
        point: &'static str,
    },

    /// A map was paired with a space model it cannot act on.
    #[error("map/space mismatch: {0}")]
    MapSpaceMismatch(String),

    /// Bad or inconsistent configuration input.
    #[error("config error: {0}")]
    Config(String),

    /// The map's declared k-sequence or witness broke its contract.
    #[error("map contract violation: {0}")]
    MapContract(String),

    /// A guaranteed numerical inequality failed beyond tolerance.
    #[error("numerical contradiction: {0}")]
    NumericalContradiction(String),

    /// A guaranteed trajectory property failed its audit; carries the verdict bundle.
    #[error("monitor failure: {summary}")]
    MonitorFailure {
        summary: String,
        /// JSON diagnostic bundle (verdicts, witnesses).
        bundle: serde_json::Value,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
