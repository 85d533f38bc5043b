//! Tensor calculus on coordinate charts and identity checks for gradient
//! Einstein-type structures.

pub mod chart;
pub mod constructions;
pub mod curvature;
pub mod einstein_type;
pub mod error;
pub mod expr;
pub mod levelset;
pub mod report;
pub mod spectral;
pub mod tensorfield;

pub use error::{GeomError, Result};
