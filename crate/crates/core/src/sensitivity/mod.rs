//! Sensitivities of ODE solutions with respect to parameters and initial values.
//!
//! For `Y' = f(t, Y, P)` the sensitivities `V = dY/dP` and `W = dY/dY(t0)`
//! satisfy the variational equations
//!
//! ```text
//! V' = f_Y·V + f_P,   V(t0) = 0
//! W' = f_Y·W,         W(t0) = I
//! ```
//!
//! which are integrated together with `Y` as one composite state
//! `[Y; vec(V); vec(W)]` (column-major `vec`). The resulting trajectory
//! Jacobians are then contracted with seeds ([`jvp_solution`]) or adjoints
//! ([`vjp_solution`]).
//!
//! Solves with dual-number inputs are dispatched through [`SolveDispatch`]:
//! derivative payloads are stripped, the augmented system is integrated one
//! scalar level lower and the payloads are reassembled from the sensitivities.
//! Nested duals recurse, which is what lets [`hessian_forward_over_reverse`]
//! push dual numbers through a reverse-mode gradient that itself solves ODEs.

mod augmented;
mod bundle;
mod dispatch;
mod hessian;

pub use augmented::{augment_rhs, pack_state, unpack_state, AugmentedSystem};
pub use bundle::{forward_sensitivity_solve, jvp_solution, vjp_solution, JacobianPair, SensitivityBundle};
pub use dispatch::{dual_aware_solve, SolveDispatch};
pub use hessian::hessian_forward_over_reverse;

use crate::error::{Error, Result};
use crate::scalars::{eval_jacobian_dual, Scalar};

/// A parameterised right-hand side `Y' = f(t, Y, P)`.
pub trait OdeSystem {
    /// Number of states `M`.
    fn state_dim(&self) -> usize;

    /// Number of parameters `K`.
    fn param_dim(&self) -> usize;

    fn rhs<S: Scalar>(&self, t: f64, y: &[S], p: &[S], dy: &mut [S]);

    fn has_analytic_jacobians(&self) -> bool {
        false
    }

    /// Writes hand-derived `f_Y` (`M×M`) and `f_P` (`M×K`), column-major.
    ///
    /// Only called when [`has_analytic_jacobians`](Self::has_analytic_jacobians)
    /// returns true.
    fn analytic_jacobians<S: Scalar>(&self, _t: f64, _y: &[S], _p: &[S], _fy: &mut [S], _fp: &mut [S]) {
        unreachable!("analytic_jacobians called on a system without analytic Jacobians")
    }
}

/// Source of `f_Y` and `f_P` for the augmented system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum JacobianProvider {
    /// Hand-derived Jacobians supplied by the model.
    Analytic,
    /// Forward-mode dual numbers, one evaluation per state and parameter.
    #[default]
    DualAd,
}

impl JacobianProvider {
    pub fn check<F: OdeSystem>(self, sys: &F) -> Result<()> {
        if self == JacobianProvider::Analytic && !sys.has_analytic_jacobians() {
            return Err(Error::NoAnalyticJacobian);
        }
        Ok(())
    }
}

/// Evaluates `f_Y` and `f_P` at `(t, y, p)` into column-major buffers.
pub fn jacobians<S: Scalar, F: OdeSystem>(
    sys: &F,
    provider: JacobianProvider,
    t: f64,
    y: &[S],
    p: &[S],
    fy: &mut [S],
    fp: &mut [S],
) {
    match provider {
        JacobianProvider::Analytic => sys.analytic_jacobians(t, y, p, fy, fp),
        JacobianProvider::DualAd => {
            let m = y.len();
            let mut z = Vec::with_capacity(m + p.len());
            z.extend_from_slice(y);
            z.extend_from_slice(p);
            let jac = eval_jacobian_dual(
                |z| {
                    let mut out = vec![Scalar::zero(); m];
                    sys.rhs(t, &z[..m], &z[m..], &mut out);
                    out
                },
                &z,
            )
            .expect("input and output sizes are fixed by the system");
            let (jy, jp) = jac.as_slice().split_at(m * m);
            fy.copy_from_slice(jy);
            fp.copy_from_slice(jp);
        }
    }
}
