//! State estimation as an equivalent circuit program.
//!
//! PMU and RTU measurements are modelled as circuit elements attached to a
//! split-circuit (real/imaginary) network. A weighted least-squares estimate
//! is found by solving the primal circuit together with its adjoint under
//! box constraints, using a damped primal-dual interior-point Newton method.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod case_io;
pub mod ecp;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod powerflow;
pub mod solver;
pub mod sosc;
pub mod sparse;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
