//! Gluing Riemannian metrics along isometric boundaries with certified
//! curvature lower bounds.
//!
//! Two metrics that agree on a shared boundary hypersurface induce a metric
//! that is merely continuous across the interface.  This crate builds the
//! modified metric on one side, glues, mollifies, and then certifies that a
//! chosen curvature functional (operator, Ricci, scalar, bi, isotropic or
//! flag bound) stays above `κ - ε` with `ε` shrinking along a sweep of the
//! gluing parameter.
//!
//! The main entry points are [`scenarios::builtin`] / [`scenarios::from_config`]
//! for inputs and [`bounds::certify`] for the sweep driver.

pub mod bounds;
pub mod collar;
pub mod curvature;
pub mod error;
pub mod expr;
pub mod field;
pub mod gluing;
pub mod lambda2;
pub mod profile;
pub mod scenarios;
pub mod smoothing;
pub mod tensor;

pub use error::{Error, Result};
