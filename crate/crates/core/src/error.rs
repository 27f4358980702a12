use thiserror::Error;

/// Errors raised by the sampler, estimators and model code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AiselError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A caller broke a documented precondition (e.g. reading ESS from an
    /// unnormalized ensemble).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Every log weight was -inf, so no normalization is possible.
    #[error("total weight degeneracy: all {0} log weights are -inf")]
    TotalDegeneracy(usize),

    /// The sweep collapsed at temperature index `t`.
    #[error("weight degeneracy at temperature index {t} (a_t = {a_t})")]
    DegenerateTemperature { t: usize, a_t: f64 },

    #[error("initial density produced no in-support draw after {0} attempts")]
    InitRetriesExhausted(usize),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for AiselError {
    fn from(e: std::io::Error) -> Self {
        AiselError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AiselError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(AiselError::InvalidArgument(msg.into()))
}
