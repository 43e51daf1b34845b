use thiserror::Error;

/// Errors raised by the negotiation engine and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rate {0}: rates must be finite and non-negative")]
    InvalidRate(f64),
    #[error("invalid load: {0}")]
    InvalidLoad(String),
    #[error("spread must be positive, got {0}")]
    NonPositiveSpread(f64),
    #[error("degenerate spread: target equals floor, concession range is zero")]
    DegenerateSpread,
    #[error("target {target} is below the rate floor {floor}")]
    TargetBelowFloor { target: f64, floor: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown {what} key `{key}`")]
    UnknownKey { what: &'static str, key: String },
    #[error("negotiation did not reach agreement")]
    NotAgreed,
    #[error("statistics: {0}")]
    Statistics(String),
    #[error("prompt placeholder `{0}` has no value")]
    MissingField(&'static str),
    #[error("cell (strategy={strategy}, carrier={carrier}, S={spread}%): {source}")]
    Cell {
        strategy: String,
        carrier: String,
        spread: f64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
