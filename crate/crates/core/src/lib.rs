//! Substructured linear elasticity with guaranteed error bounds.
//!
//! A FETI-DP solver on a 2D P1 triangulation produces, at every iteration, a
//! locally equilibrated field, a globally continuous field and balanced
//! interface reactions. From these an admissible displacement/stress pair is
//! rebuilt subdomain by subdomain and the error in constitutive relation gives
//! an upper bound of the energy error.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elasticity;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod fetidp;
pub mod interface_ops;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod recovery;

pub use error::{Error, FailureClass, Result};
