use thiserror::Error;

use crate::formulation::FixReason;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("component {component} has value {value}, expected a rating in [0, 5]")]
    RawScaleRange { component: usize, value: f64 },
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error("pin forces {element:?} onto {device:?}, but the pair is excluded ({reason})")]
    PinInfeasible {
        element: String,
        device: String,
        reason: FixReason,
    },
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{pairs} free pairs exceed the enumeration bound of {limit}")]
    TooLarge { pairs: usize, limit: usize },
}
