use nalgebra::DMatrix;

use super::{unpack_state, AugmentedSystem, JacobianProvider, OdeSystem, SolveDispatch};
use crate::error::{Error, Result};
use crate::scalars::Scalar;
use crate::solvers::{SolverConfig, TimeSpec};

/// Solution and sensitivities at every output time.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityBundle<S: Scalar = f64> {
    times: Vec<f64>,
    /// `N_out × M`
    states: DMatrix<S>,
    /// `dY/dP` per output time, each `M × K`.
    v: Vec<DMatrix<S>>,
    /// `dY/dY(t0)` per output time, each `M × M`.
    w: Vec<DMatrix<S>>,
    points_mode: bool,
}

impl<S: Scalar> SensitivityBundle<S> {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn param_dim(&self) -> usize {
        self.v.first().map_or(0, DMatrix::ncols)
    }

    pub fn states(&self) -> &DMatrix<S> {
        &self.states
    }

    pub fn v(&self, i: usize) -> &DMatrix<S> {
        &self.v[i]
    }

    pub fn w(&self, i: usize) -> &DMatrix<S> {
        &self.w[i]
    }

    /// Whether the bundle was computed on prescribed output points.
    pub fn points_mode(&self) -> bool {
        self.points_mode
    }

    /// Composite row `[Y; vec(V); vec(W)]` at output `i`.
    pub fn composite_row(&self, i: usize) -> Vec<S> {
        let mut row: Vec<S> = self.states.row(i).iter().copied().collect();
        row.extend_from_slice(self.v[i].as_slice());
        row.extend_from_slice(self.w[i].as_slice());
        row
    }

    /// Row-stacked trajectory Jacobians.
    pub fn jacobian_pair(&self) -> JacobianPair<S> {
        let (n, m, k) = (self.len(), self.state_dim(), self.param_dim());
        let jp = DMatrix::from_fn(n * m, k, |row, c| self.v[row / m][(row % m, c)]);
        let jy0 = DMatrix::from_fn(n * m, m, |row, c| self.w[row / m][(row % m, c)]);
        JacobianPair {
            jp,
            jy0,
            n_out: n,
            m,
            points_mode: self.points_mode,
        }
    }
}

/// Jacobians of the stacked output trajectory with respect to `P` and `Y(t0)`.
///
/// Row `r·M + m` belongs to state component `m` at output time `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianPair<S: Scalar = f64> {
    /// `(N_out·M) × K`
    pub jp: DMatrix<S>,
    /// `(N_out·M) × M`
    pub jy0: DMatrix<S>,
    n_out: usize,
    m: usize,
    points_mode: bool,
}

impl<S: Scalar> JacobianPair<S> {
    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn param_dim(&self) -> usize {
        self.jp.ncols()
    }

    /// `[Jy0 | Jp]`, the Jacobian with respect to the inputs ordered `(y0 ‖ p)`.
    pub fn stacked(&self) -> DMatrix<S> {
        let m = self.m;
        DMatrix::from_fn(self.jy0.nrows(), m + self.param_dim(), |r, c| {
            if c < m {
                self.jy0[(r, c)]
            } else {
                self.jp[(r, c - m)]
            }
        })
    }
}

/// Integrates the augmented system from `[y0; 0; vec(I)]` and unpacks every output row.
pub fn forward_sensitivity_solve<S: SolveDispatch, F: OdeSystem>(
    sys: &F,
    provider: JacobianProvider,
    p: &[S],
    y0: &[S],
    time: &TimeSpec,
    solver: &SolverConfig,
) -> Result<SensitivityBundle<S>> {
    let (m, k) = (sys.state_dim(), sys.param_dim());
    if p.len() != k {
        return Err(Error::DimensionMismatch {
            what: "parameters",
            expected: k,
            got: p.len(),
        });
    }
    let aug = AugmentedSystem::new(sys, provider)?;
    let x0 = aug.initial_state(y0)?;
    let traj = S::solve_system(&aug, &x0, p, time, solver)?;

    let n = traj.len();
    let mut states = DMatrix::from_element(n, m, S::zero());
    let mut v = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let (y, vi, wi) = unpack_state(traj.row(i), m, k)?;
        for (j, yj) in y.into_iter().enumerate() {
            states[(i, j)] = yj;
        }
        v.push(vi);
        w.push(wi);
    }
    Ok(SensitivityBundle {
        times: traj.times().to_vec(),
        states,
        v,
        w,
        points_mode: time.is_points(),
    })
}

/// Neumaier summation.
#[derive(Clone, Copy)]
struct CompensatedSum<S> {
    sum: S,
    carry: S,
}

impl<S: Scalar> CompensatedSum<S> {
    fn new() -> Self {
        CompensatedSum {
            sum: S::zero(),
            carry: S::zero(),
        }
    }

    fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.re().abs() >= x.re().abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> S {
        self.sum + self.carry
    }
}

/// Forward-mode propagation: `Jy0·g_y0 + Jp·g_p`, reshaped to `N_out × M`.
pub fn jvp_solution<S: Scalar>(pair: &JacobianPair<S>, g_y0: &[S], g_p: &[S]) -> Result<DMatrix<S>> {
    let (n, m, k) = (pair.n_out, pair.m, pair.param_dim());
    if g_y0.len() != m {
        return Err(Error::DimensionMismatch {
            what: "initial-value seed",
            expected: m,
            got: g_y0.len(),
        });
    }
    if g_p.len() != k {
        return Err(Error::DimensionMismatch {
            what: "parameter seed",
            expected: k,
            got: g_p.len(),
        });
    }
    Ok(DMatrix::from_fn(n, m, |r, c| {
        let row = r * m + c;
        let mut acc = CompensatedSum::new();
        for (j, &g) in g_y0.iter().enumerate() {
            acc.add(pair.jy0[(row, j)] * g);
        }
        for (j, &g) in g_p.iter().enumerate() {
            acc.add(pair.jp[(row, j)] * g);
        }
        acc.total()
    }))
}

/// Reverse-mode contraction: `vec(a_y)ᵀ·Jy0` and `vec(a_y)ᵀ·Jp`.
///
/// The adjoint must have the shape of the trajectory, which is only stable
/// when the output times were prescribed; span-mode bundles are rejected.
pub fn vjp_solution<S: Scalar>(pair: &JacobianPair<S>, a_y: &DMatrix<S>) -> Result<(Vec<S>, Vec<S>)> {
    if !pair.points_mode {
        return Err(Error::SpanModeUnsupported);
    }
    let (n, m, k) = (pair.n_out, pair.m, pair.param_dim());
    if a_y.shape() != (n, m) {
        return Err(Error::DimensionMismatch {
            what: "trajectory adjoint",
            expected: n * m,
            got: a_y.len(),
        });
    }
    // long reductions over every output time; compensate to keep the adjoint
    // consistent with the forward product at roundoff level
    let mut a_y0 = vec![CompensatedSum::new(); m];
    let mut a_p = vec![CompensatedSum::new(); k];
    for r in 0..n {
        for c in 0..m {
            let a = a_y[(r, c)];
            if a == S::zero() {
                continue;
            }
            let row = r * m + c;
            for (j, out) in a_y0.iter_mut().enumerate() {
                out.add(a * pair.jy0[(row, j)]);
            }
            for (j, out) in a_p.iter_mut().enumerate() {
                out.add(a * pair.jp[(row, j)]);
            }
        }
    }
    Ok((
        a_y0.iter().map(CompensatedSum::total).collect(),
        a_p.iter().map(CompensatedSum::total).collect(),
    ))
}
