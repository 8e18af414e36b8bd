use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric or structural argument is outside its domain. `field` is a
    /// dotted path (`config.ll_amount`) so callers can point at the input.
    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// The ex-ante utility gap between LL and SS is not positive, so the
    /// awareness ratio has no meaning for this subject.
    #[error("utility gap between LL and SS is not positive ({gap})")]
    DenominatorNonPositive { gap: f64 },

    #[error("answer does not match the pending question: expected {expected}, got {got}")]
    AnswerMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("session already finished ({phase})")]
    SessionFinished { phase: &'static str },

    #[error("session not finished yet ({phase})")]
    SessionNotFinished { phase: &'static str },

    #[error("{0} must not be empty")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Machine-readable short code, used by the service error payloads.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DenominatorNonPositive { .. } => "denominator_non_positive",
            Error::AnswerMismatch { .. } => "answer_mismatch",
            Error::SessionFinished { .. } => "session_finished",
            Error::SessionNotFinished { .. } => "session_not_finished",
            Error::Empty(_) => "empty_input",
        }
    }
}
