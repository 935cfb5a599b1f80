use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The spring-length formula left its geometric range, which only
    /// happens for inconsistent geometry or angles outside the joint range.
    #[error("spring domain error at theta = {theta}: length {length} outside [{min}, {max}]")]
    SpringDomain {
        theta: f64,
        length: f64,
        min: f64,
        max: f64,
    },

    #[error("operation requires symmetric input: {0}")]
    AsymmetricInput(&'static str),

    #[error("no root bracketed on [{lo}, {hi}]")]
    NoRootBracketed { lo: f64, hi: f64 },

    #[error("singular {what} (measure {measure:e})")]
    Singular { what: &'static str, measure: f64 },

    #[error(
        "newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// `K_theta - K_g` is numerically singular: the loaded configuration is
    /// at (or extremely close to) a stiffness-loss point.
    #[error("quasi-buckling point: condition number {condition:e}")]
    QuasiBuckling { condition: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}
