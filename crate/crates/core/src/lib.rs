//! Center-manifold reduction for nonlocal equations `u + K*u + F(u, mu) = 0` on the line.
//!
//! The pipeline is spectrum -> kernel basis and projection -> order-by-order jet of the
//! reduction map -> reduced vector field, with a numerical verification layer that
//! reconstructs solutions and measures residuals of the original equation.

pub mod error;
pub mod field;
pub mod jet;
pub mod json;
pub mod kernel;
pub mod nonlin;
pub mod numeric;
pub mod problem;
pub mod projection;
pub mod quasipoly;
pub mod spectrum;
pub mod tsolve;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64 as Cx;
