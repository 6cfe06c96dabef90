use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Domain { field: &'static str, reason: String },

    #[error("numeric overflow in {block}: largest entry {magnitude:e} exceeds the conditioning guard")]
    Overflow { block: &'static str, magnitude: f64 },

    /// Cancellation would make the result meaningless at working precision.
    #[error("{quantity} is ill-conditioned: rounding-error bound {bound:e} exceeds the tolerance")]
    IllConditioned { quantity: &'static str, bound: f64 },

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
}

impl Error {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
