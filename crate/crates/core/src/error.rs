use thiserror::Error;

use crate::expr::ExprError;

/// Errors raised by the geometric layers (charts, tensors, curvature,
/// structures, level sets and builders).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("non-finite value in {what} at {point:?}")]
    NonFinite { what: String, point: Vec<f64> },
    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("finite-difference stencil along coordinate {coord} leaves the domain at {point:?}")]
    StencilOutOfDomain { coord: usize, point: Vec<f64> },
    #[error("slot mismatch: {0}")]
    SlotMismatch(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("invalid parameters: (alpha, beta, mu) must not all vanish")]
    InvalidParameters,
    #[error("operation needs alpha != 0")]
    AlphaZero,
    #[error("operation needs beta != 0")]
    BetaZero,
    #[error("wrong structure class: {0}")]
    WrongClass(String),
    #[error("structure is not degenerate")]
    NotDegenerate,
    #[error("host chart is not Einstein (deviation {deviation:e})")]
    NotEinstein { deviation: f64 },
    #[error("|grad f| = {norm:e} is below the regularity threshold")]
    CriticalPoint { norm: f64 },
    #[error("warp function is not positive on the interval (value {value} at r = {r})")]
    NonpositiveWarp { r: f64, value: f64 },
    #[error("f'(0) vanishes")]
    ZeroInitialSlope,
    #[error("f' changes sign near r = {r}")]
    SignChange { r: f64 },
}

pub type Result<T, E = GeomError> = std::result::Result<T, E>;
