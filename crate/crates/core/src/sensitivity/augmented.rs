use nalgebra::DMatrix;

use super::{jacobians, JacobianProvider, OdeSystem};
use crate::error::{Error, Result};
use crate::scalars::Scalar;

/// Packs `[Y; vec(V); vec(W)]` with column-major `vec`.
pub fn pack_state<S: Scalar>(y: &[S], v: &DMatrix<S>, w: &DMatrix<S>) -> Result<Vec<S>> {
    let m = y.len();
    if v.nrows() != m {
        return Err(Error::DimensionMismatch {
            what: "V rows",
            expected: m,
            got: v.nrows(),
        });
    }
    if w.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            what: "W size",
            expected: m * m,
            got: w.len(),
        });
    }
    let mut x = Vec::with_capacity(m + v.len() + w.len());
    x.extend_from_slice(y);
    x.extend_from_slice(v.as_slice());
    x.extend_from_slice(w.as_slice());
    Ok(x)
}

/// Inverse of [`pack_state`] for `m` states and `k` parameters.
pub fn unpack_state<S: Scalar>(x: &[S], m: usize, k: usize) -> Result<(Vec<S>, DMatrix<S>, DMatrix<S>)> {
    let expected = m + m * k + m * m;
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            what: "composite state",
            expected,
            got: x.len(),
        });
    }
    let y = x[..m].to_vec();
    let v = DMatrix::from_column_slice(m, k, &x[m..m + m * k]);
    let w = DMatrix::from_column_slice(m, m, &x[m + m * k..]);
    Ok((y, v, w))
}

/// The variational system of `inner` as an [`OdeSystem`] on the composite state.
///
/// It keeps the parameters of `inner`, so it can itself be augmented again.
#[derive(Debug)]
pub struct AugmentedSystem<'a, F> {
    inner: &'a F,
    provider: JacobianProvider,
    m: usize,
    k: usize,
}

impl<'a, F: OdeSystem> AugmentedSystem<'a, F> {
    pub fn new(inner: &'a F, provider: JacobianProvider) -> Result<Self> {
        provider.check(inner)?;
        Ok(AugmentedSystem {
            inner,
            provider,
            m: inner.state_dim(),
            k: inner.param_dim(),
        })
    }

    pub fn inner(&self) -> &F {
        self.inner
    }

    pub fn provider(&self) -> JacobianProvider {
        self.provider
    }

    /// Composite initial state `[y0; 0; vec(I)]`.
    pub fn initial_state<S: Scalar>(&self, y0: &[S]) -> Result<Vec<S>> {
        if y0.len() != self.m {
            return Err(Error::DimensionMismatch {
                what: "initial state",
                expected: self.m,
                got: y0.len(),
            });
        }
        let v = DMatrix::from_element(self.m, self.k, S::zero());
        let w = DMatrix::from_fn(self.m, self.m, |i, j| if i == j { S::one() } else { S::zero() });
        pack_state(y0, &v, &w)
    }
}

impl<F: OdeSystem> OdeSystem for AugmentedSystem<'_, F> {
    fn state_dim(&self) -> usize {
        self.m + self.m * self.k + self.m * self.m
    }

    fn param_dim(&self) -> usize {
        self.k
    }

    fn rhs<S: Scalar>(&self, t: f64, x: &[S], p: &[S], dx: &mut [S]) {
        let (m, k) = (self.m, self.k);
        let (y, rest) = x.split_at(m);
        let (v, w) = rest.split_at(m * k);
        let mut fy = vec![S::zero(); m * m];
        let mut fp = vec![S::zero(); m * k];
        jacobians(self.inner, self.provider, t, y, p, &mut fy, &mut fp);

        let (dy, drest) = dx.split_at_mut(m);
        let (dv, dw) = drest.split_at_mut(m * k);
        self.inner.rhs(t, y, p, dy);
        // V' = f_Y·V + f_P
        for c in 0..k {
            for r in 0..m {
                let mut acc = S::zero();
                for j in 0..m {
                    acc += fy[r + m * j] * v[j + m * c];
                }
                dv[r + m * c] = acc + fp[r + m * c];
            }
        }
        // W' = f_Y·W
        for c in 0..m {
            for r in 0..m {
                let mut acc = S::zero();
                for j in 0..m {
                    acc += fy[r + m * j] * w[j + m * c];
                }
                dw[r + m * c] = acc;
            }
        }
    }
}

/// Right-hand side of the composite system with the parameters bound.
pub fn augment_rhs<'a, S: Scalar, F: OdeSystem>(
    sys: &'a F,
    provider: JacobianProvider,
    p: &'a [S],
) -> Result<impl Fn(f64, &[S], &mut [S]) + 'a> {
    if p.len() != sys.param_dim() {
        return Err(Error::DimensionMismatch {
            what: "parameters",
            expected: sys.param_dim(),
            got: p.len(),
        });
    }
    let aug = AugmentedSystem::new(sys, provider)?;
    Ok(move |t: f64, x: &[S], dx: &mut [S]| aug.rhs(t, x, p, dx))
}
