use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalars::Dual1;

/// Hessian by running a gradient routine on dual inputs.
///
/// Column `j` is the tangent of `gradient(x0 + ε·e_j)`. When `gradient` is a
/// reverse-mode routine this is forward-over-reverse; any ODE solves inside it
/// receive dual inputs and go through the dual-aware dispatch.
pub fn hessian_forward_over_reverse<G>(gradient: G, x0: &[f64]) -> Result<DMatrix<f64>>
where
    G: Fn(&[Dual1]) -> Result<Vec<Dual1>>,
{
    let n = x0.len();
    let mut x: Vec<Dual1> = x0.iter().map(|&v| Dual1::constant(v)).collect();
    let mut hessian = DMatrix::zeros(n, n);
    for j in 0..n {
        x[j].tangent = 1.0;
        let g = gradient(&x)?;
        x[j].tangent = 0.0;
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                what: "gradient",
                expected: n,
                got: g.len(),
            });
        }
        for (i, gi) in g.iter().enumerate() {
            hessian[(i, j)] = gi.tangent;
        }
    }
    Ok(hessian)
}
