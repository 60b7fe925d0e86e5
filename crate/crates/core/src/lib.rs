//! Effective Hamiltonians for the one-dimensional viscous Hamilton-Jacobi
//! equation
//!
//! ```text
//! u_t = (eps/2) u_xx + 1/2 u_x^2 - c |u_x| + beta V(x/eps)
//! ```
//!
//! with a random potential `V` taking values in `[0, 1]`.
//!
//! The crate computes the effective Hamiltonian three ways:
//!
//! * [`corrector`]: Riccati correctors and a root search for the tilted free
//!   energy, assembled into the effective Hamiltonian by [`effective`];
//! * [`montecarlo`]: exponential path functionals of controlled Brownian
//!   motion in the potential;
//! * [`pde`]: explicit finite-difference solves of the scaled equation.
//!
//! [`environment`] generates and stores the potential shared by all three.

// `!(x > 0.0)` rejects NaN as well; the lint would have it spelled out.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrector;
pub mod effective;
pub mod environment;
pub mod error;
pub mod montecarlo;
pub mod numerics;
pub mod pde;

pub use error::{Error, Result};
