//! Relocated fixed-point iterations for monotone inclusions.
//!
//! Splitting methods such as Douglas-Rachford have fixed-point sets that move
//! with the stepsize. A *fixed-point relocator* `Q_{δ←γ}` carries `Fix T_γ`
//! onto `Fix T_δ`, which lets the stepsize change between iterations:
//!
//! ```text
//! x_{n+1} = Q_{γ_{n+1}←γ_n} T_{γ_n} x_n
//! ```
//!
//! This crate provides:
//!
//! * [`operators`]: affine monotone operators and box normal cones, touched only
//!   through their resolvents.
//! * [`family`]: the generic [`OperatorFamily`] abstraction, stepsize schedules
//!   and the relocated iteration driver.
//! * [`dr`]: the relocated Douglas-Rachford family and its constants.
//! * [`mt`]: the relocated Malitsky-Tam family for `N ≥ 2` operators.
//! * [`diagnostics`]: rate fitting, fixed-point oracles and executable checks
//!   of the error-bound and rate inequalities.
//! * [`cli`]: the configuration-driven experiment runner behind the
//!   `relocsplit` binary.
//!
//! Everything is computed in `ℝ^d` with dense `nalgebra` vectors.

pub mod cli;
pub mod diagnostics;
pub mod dr;
mod error;
pub mod family;
pub mod mt;
pub mod operators;
mod sampling;

pub use error::{Error, Result};
pub use family::{OperatorFamily, Regularity, StepsizeSchedule};

/// Dense real vector used for every point of the underlying space.
pub type Vector = nalgebra::DVector<f64>;

/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
