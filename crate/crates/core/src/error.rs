use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("moment of order {order} is not supported: {reason}")]
    UnsupportedMoment { order: f64, reason: String },

    #[error("quadrature did not converge: estimate {estimate:e}, achieved error {achieved:e}, requested {requested:e}")]
    QuadratureNonConvergence {
        estimate: f64,
        achieved: f64,
        requested: f64,
    },

    #[error("index truncation impossible: {0}")]
    Truncation(String),

    #[error("array has zero variance: {0}")]
    ZeroVariance(String),

    #[error("moments of order {order} differ ({lhs} vs {rhs}); the integral form of zeta_{s} is not valid")]
    MomentMismatch { order: u32, s: u32, lhs: f64, rhs: f64 },

    #[error("row-sum law is not available in closed form: {0}")]
    NotAnalytic(String),

    #[error("{0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
