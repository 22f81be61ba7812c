//! Derivatives of ODE solutions.
//!
//! The crate integrates `Y' = f(t, Y, P)` with explicit Euler or an adaptive
//! Bogacki–Shampine 2(3) pair and differentiates the result in several
//! independent ways:
//!
//! * the variational (augmented) system with hand-written or dual-number Jacobians,
//! * dual numbers pushed through the solver via [`sensitivity::SolveDispatch`],
//! * one-sided finite differences and the complex-step method on whole solver runs.
//!
//! Second derivatives come from running a reverse-mode gradient on dual inputs.

pub mod cli;
pub mod diffmethods;
pub mod error;
pub mod models;
pub mod scalars;
pub mod sensitivity;
pub mod solvers;

pub use error::{Error, Result};
pub use scalars::{Dual1, Dual2, Scalar};
pub use solvers::{SolverConfig, TimeSpec, ToleranceConfig, Trajectory};
