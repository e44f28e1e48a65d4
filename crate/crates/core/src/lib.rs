//! Large-signal order reduction of composite-load dynamic components by
//! singular perturbation.
//!
//! * [`numerics`]: saturation, deadband, voltage protection, input signals.
//! * [`odesolve`]: adaptive non-stiff and stiff integrators with dense output.
//! * [`spt`]: QSS solution, reduced and boundary-layer models, accuracy bounds.
//! * [`motor`]: fifth-order induction motor and its third-order reduction.
//! * [`dera`]: aggregate DER model, its four-state reduction and boundary layer.
//! * [`harness`]: voltage-sag scenarios, full-vs-reduced comparisons, export, CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numerics;
pub mod odesolve;
pub mod spt;
pub mod motor;
pub mod dera;
pub mod harness;

pub use error::{Error, Result};
