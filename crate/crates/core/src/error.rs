use thiserror::Error;

pub type Result<T> = std::result::Result<T, GameError>;

/// Every failure the model layer can report.
///
/// The variant name is part of the CLI contract: `report.json` carries it
/// verbatim in its `error.kind` field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("InsufficientData: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("InvalidSeries: {reason} at row {index}")]
    InvalidSeries { index: usize, reason: String },
    #[error("DegenerateVolatility: estimated sigma is {sigma}")]
    DegenerateVolatility { sigma: f64 },
    #[error("InvalidHorizon: dt must be positive, got {dt}")]
    InvalidHorizon { dt: f64 },
    #[error("InvalidProbability: {value} is outside [0, 1]")]
    InvalidProbability { value: f64 },
    #[error("InvalidBelief: belief {pi} must lie in (0, 1]")]
    InvalidBelief { pi: f64 },
    #[error("InvalidParameter: {name} = {value} ({reason})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("DiscountTooSmall: r = {r} must exceed mu = {mu} and be positive")]
    DiscountTooSmall { r: f64, mu: f64 },
    #[error("PayoffOrderViolation: {0}")]
    PayoffOrderViolation(String),
    #[error("NonpositiveCutoff: termination payoff is {lambda} at pi = {pi}")]
    NonpositiveCutoff { pi: f64, lambda: f64 },
    #[error("SingularDerivative: L- slope denominator vanishes near pi = {pi} (grid index {index})")]
    SingularDerivative { pi: f64, index: usize },
    #[error("EnvelopeViolation: L- = {lminus} left (0, L+ = {lplus}] at pi = {pi} (grid index {index})")]
    EnvelopeViolation {
        pi: f64,
        index: usize,
        lminus: f64,
        lplus: f64,
    },
    #[error("NoBestResponse: no fixed point U = g(L/U) in [{lo}, {hi}] for L = {l}")]
    NoBestResponse { l: f64, lo: f64, hi: f64 },
    #[error("InvalidCurveValue: {name} = {value} must be positive")]
    InvalidCurveValue { name: &'static str, value: f64 },
    #[error("NoMembers: labeled data contains no member points")]
    NoMembers,
}

impl GameError {
    /// Stable identifier used in serialized reports.
    pub fn kind(&self) -> &'static str {
        match self {
            GameError::InsufficientData { .. } => "InsufficientData",
            GameError::InvalidSeries { .. } => "InvalidSeries",
            GameError::DegenerateVolatility { .. } => "DegenerateVolatility",
            GameError::InvalidHorizon { .. } => "InvalidHorizon",
            GameError::InvalidProbability { .. } => "InvalidProbability",
            GameError::InvalidBelief { .. } => "InvalidBelief",
            GameError::InvalidParameter { .. } => "InvalidParameter",
            GameError::DiscountTooSmall { .. } => "DiscountTooSmall",
            GameError::PayoffOrderViolation(_) => "PayoffOrderViolation",
            GameError::NonpositiveCutoff { .. } => "NonpositiveCutoff",
            GameError::SingularDerivative { .. } => "SingularDerivative",
            GameError::EnvelopeViolation { .. } => "EnvelopeViolation",
            GameError::NoBestResponse { .. } => "NoBestResponse",
            GameError::InvalidCurveValue { .. } => "InvalidCurveValue",
            GameError::NoMembers => "NoMembers",
        }
    }
}
