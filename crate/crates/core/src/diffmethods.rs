//! Black-box differentiation of whole solver runs and the all-against-all comparison.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalars::{Scalar, COMPLEX_STEP};
use crate::sensitivity::{forward_sensitivity_solve, JacobianProvider, OdeSystem};
use crate::solvers::{solve, SolverConfig, TimeSpec};

/// `√eps·|x|`, or `√eps` at zero.
///
/// A floor of 1 on the scale would perturb small rates such as `1e-4` by a
/// large fraction of their value and swamp the result in truncation error.
fn fd_step(x: f64) -> f64 {
    f64::EPSILON.sqrt() * if x == 0.0 { 1.0 } else { x.abs() }
}

/// One-sided forward differences with a relative step, see [`fd_step`].
pub fn fd_jacobian<G>(mut g: G, x: &[f64]) -> Result<DMatrix<f64>>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let base = g(x)?;
    let mut jac = DMatrix::zeros(base.len(), x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let h = fd_step(x[k]);
        xp[k] = x[k] + h;
        // the step actually taken, after rounding
        let h = xp[k] - x[k];
        let shifted = g(&xp)?;
        xp[k] = x[k];
        if shifted.len() != base.len() {
            return Err(Error::DimensionMismatch {
                what: "perturbed output",
                expected: base.len(),
                got: shifted.len(),
            });
        }
        for (i, (s, b)) in shifted.iter().zip(&base).enumerate() {
            jac[(i, k)] = (s - b) / h;
        }
    }
    Ok(jac)
}

/// Complex-step Jacobian, column `k = Im g(x + i·h·e_k) / h` with `h = 1e-100`.
pub fn cs_jacobian<G>(mut g: G, x: &[f64]) -> Result<DMatrix<f64>>
where
    G: FnMut(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let mut z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut columns = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        z[k].im = COMPLEX_STEP;
        let out = g(&z)?;
        z[k].im = 0.0;
        columns.push(out.iter().map(|c| c.im / COMPLEX_STEP).collect::<Vec<_>>());
    }
    let rows = columns.first().map_or(0, Vec::len);
    if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
        return Err(Error::DimensionMismatch {
            what: "perturbed output",
            expected: rows,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(rows, x.len(), |i, k| columns[k][i]))
}

/// Central-difference gradient of a scalar function, step as in [`fd_jacobian`].
pub fn central_gradient<G>(mut g: G, x: &[f64]) -> Result<Vec<f64>>
where
    G: FnMut(&[f64]) -> Result<f64>,
{
    let mut xp = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let h = fd_step(x[k]);
        xp[k] = x[k] + h;
        let up = g(&xp)?;
        let h_up = xp[k] - x[k];
        xp[k] = x[k] - h;
        let down = g(&xp)?;
        let h_down = x[k] - xp[k];
        xp[k] = x[k];
        grad.push((up - down) / (h_up + h_down));
    }
    Ok(grad)
}

/// `‖A − B‖_F / max(‖A‖_F, ‖B‖_F)`, zero when both are zero.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            what: "compared matrices",
            expected: a.len(),
            got: b.len(),
        });
    }
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((a - b).norm() / scale)
}

/// The map `(y0 ‖ p) ↦` trajectory at prescribed output points, stacked time-major.
///
/// A span-mode solve picks its own output times, so perturbed runs would not
/// be comparable; only point grids are accepted.
#[derive(Clone, Debug)]
pub struct SolutionMap<'a, F> {
    sys: &'a F,
    time: TimeSpec,
    solver: SolverConfig,
}

impl<'a, F: OdeSystem> SolutionMap<'a, F> {
    pub fn new(sys: &'a F, time: TimeSpec, solver: SolverConfig) -> Result<Self> {
        time.validate()?;
        if !time.is_points() {
            return Err(Error::SpanModeUnsupported);
        }
        Ok(SolutionMap { sys, time, solver })
    }

    pub fn input_dim(&self) -> usize {
        self.sys.state_dim() + self.sys.param_dim()
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "solution map input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let (y0, p) = x.split_at(self.sys.state_dim());
        let traj = solve(
            |t, y: &[S], dy: &mut [S]| self.sys.rhs(t, y, p, dy),
            &self.time,
            y0,
            &self.solver,
        )?;
        Ok(traj.states().to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Analytic,
    Ad,
    Fd,
    Cs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Analytic, Method::Ad, Method::Fd, Method::Cs];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Analytic => "analytic",
            Method::Ad => "ad",
            Method::Fd => "fd",
            Method::Cs => "cs",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Method::Analytic),
            "ad" => Ok(Method::Ad),
            "fd" => Ok(Method::Fd),
            "cs" => Ok(Method::Cs),
            other => Err(Error::InvalidParameters(format!("unknown method '{other}'"))),
        }
    }
}

/// Sensitivities of the stacked trajectory as `[d/dy0 | d/dp]`, `N·M × (M+K)`.
pub fn sensitivity_matrix<F: OdeSystem>(
    method: Method,
    sys: &F,
    y0: &[f64],
    p: &[f64],
    time: &TimeSpec,
    solver: &SolverConfig,
) -> Result<DMatrix<f64>> {
    let x: Vec<f64> = y0.iter().chain(p).copied().collect();
    match method {
        Method::Analytic | Method::Ad => {
            if !time.is_points() {
                return Err(Error::SpanModeUnsupported);
            }
            let provider = if method == Method::Analytic {
                JacobianProvider::Analytic
            } else {
                JacobianProvider::DualAd
            };
            Ok(forward_sensitivity_solve(sys, provider, p, y0, time, solver)?
                .jacobian_pair()
                .stacked())
        }
        Method::Fd => {
            let map = SolutionMap::new(sys, time.clone(), *solver)?;
            fd_jacobian(|x| map.eval(x), &x)
        }
        Method::Cs => {
            let map = SolutionMap::new(sys, time.clone(), *solver)?;
            cs_jacobian(|z| map.eval(z), &x)
        }
    }
}

/// Pairwise relative errors between methods; only `i < j` entries are filled.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareTable {
    methods: Vec<Method>,
    errors: DMatrix<f64>,
}

impl CompareTable {
    pub fn methods(&self) -> &[Method] {
        &self.methods
    }

    /// Error between two methods in either order; `None` if one was not run.
    pub fn get(&self, a: Method, b: Method) -> Option<f64> {
        let i = self.methods.iter().position(|&m| m == a)?;
        let j = self.methods.iter().position(|&m| m == b)?;
        if i == j {
            return Some(0.0);
        }
        Some(self.errors[(i.min(j), i.max(j))])
    }

    /// The upper-triangular entries in row order.
    pub fn entries(&self) -> Vec<(Method, Method, f64)> {
        let n = self.methods.len();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push((self.methods[i], self.methods[j], self.errors[(i, j)]));
            }
        }
        out
    }
}

/// Computes every method's sensitivity matrix and compares each pair.
pub fn cross_compare<F: OdeSystem + Sync>(
    sys: &F,
    y0: &[f64],
    p: &[f64],
    time: &TimeSpec,
    solver: &SolverConfig,
    methods: &[Method],
) -> Result<CompareTable> {
    if !time.is_points() {
        return Err(Error::SpanModeUnsupported);
    }
    let mats: Vec<DMatrix<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = methods
            .iter()
            .map(|&m| scope.spawn(move || sensitivity_matrix(m, sys, y0, p, time, solver)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sensitivity worker panicked"))
            .collect::<Result<_>>()
    })?;
    let n = methods.len();
    let mut errors = DMatrix::from_element(n, n, f64::NAN);
    for i in 0..n {
        errors[(i, i)] = 0.0;
        for j in i + 1..n {
            errors[(i, j)] = relative_error(&mats[i], &mats[j])?;
        }
    }
    Ok(CompareTable {
        methods: methods.to_vec(),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearGrowth, LotkaVolterra};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn fd_exact_on_affine_maps() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 4.0]);
        let g = |x: &[f64]| {
            Ok((&a * DMatrix::from_column_slice(3, 1, x))
                .as_slice()
                .iter()
                .map(|v| v + 7.0)
                .collect())
        };
        // dyadic inputs and coefficients keep every evaluation exact
        let j = fd_jacobian(g, &[0.375, 2.0, -5.0]).unwrap();
        assert!(relative_error(&j, &a).unwrap() <= 1e-12);
    }

    #[test]
    fn fd_square() {
        let j = fd_jacobian(|x: &[f64]| Ok(vec![x[0] * x[0]]), &[1.0]).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() <= 1e-7);
    }

    #[test]
    fn cs_exact_on_polynomials_and_constants() {
        let g = |z: &[Complex64]| Ok(vec![z[0] * z[0] * z[1], z[1] * z[1] * z[1] - z[0]]);
        let j = cs_jacobian(g, &[1.5, -2.0]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[2.0 * 1.5 * -2.0, 1.5 * 1.5, -1.0, 3.0 * 4.0]);
        assert!(relative_error(&j, &want).unwrap() <= 1e-15);

        let c = cs_jacobian(|_: &[Complex64]| Ok(vec![Complex64::new(3.0, 0.0); 2]), &[1.0, 2.0]).unwrap();
        assert_eq!(c, DMatrix::zeros(2, 2));
    }

    #[test]
    fn central_gradient_of_quadratic() {
        let g = central_gradient(|x: &[f64]| Ok(x[0] * x[0] + 3.0 * x[1]), &[2.0, -1.0]).unwrap();
        assert_relative_eq!(g[0], 4.0, max_relative = 1e-7);
        assert_relative_eq!(g[1], 3.0, max_relative = 1e-7);
    }

    #[test]
    fn relative_error_examples() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 1, 1.0 + 1e-6);
        assert_eq!(relative_error(&a, &a).unwrap(), 0.0);
        let (x, y) = (a[(0, 0)], b[(0, 0)]);
        assert_relative_eq!(relative_error(&a, &b).unwrap(), (y - x) / y, max_relative = 1e-12);
        assert_relative_eq!(relative_error(&a, &b).unwrap(), 1e-6, max_relative = 1e-5);
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(relative_error(&z, &z).unwrap(), 0.0);
        assert!(relative_error(&a, &z).is_err());
    }

    proptest! {
        #[test]
        fn relative_error_symmetric(
            a in proptest::collection::vec(-1e3f64..1e3, 6),
            b in proptest::collection::vec(-1e3f64..1e3, 6),
        ) {
            let a = DMatrix::from_vec(2, 3, a);
            let b = DMatrix::from_vec(2, 3, b);
            prop_assert_eq!(relative_error(&a, &b).unwrap(), relative_error(&b, &a).unwrap());
            prop_assert_eq!(relative_error(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn fd_and_cs_agree_on_smooth_maps(x in proptest::collection::vec(0.5f64..3.0, 3)) {
            let fd = fd_jacobian(|x: &[f64]| Ok(vec![x[0] * x[1].exp(), x[2].ln() * x[0] * x[0]]), &x).unwrap();
            let cs = cs_jacobian(|z: &[Complex64]| Ok(vec![z[0] * z[1].exp(), z[2].ln() * z[0] * z[0]]), &x).unwrap();
            prop_assert!(relative_error(&fd, &cs).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn span_mode_rejected() {
        let span = TimeSpec::span(0.0, 10.0).unwrap();
        assert_eq!(
            SolutionMap::new(&LotkaVolterra, span.clone(), SolverConfig::rk23()).unwrap_err(),
            Error::SpanModeUnsupported
        );
        for m in Method::ALL {
            let err = sensitivity_matrix(
                m,
                &LotkaVolterra,
                &[1000.0, 20.0],
                &[0.015, 1e-4, 0.03, 1e-4],
                &span,
                &SolverConfig::rk23(),
            );
            assert_eq!(err.unwrap_err(), Error::SpanModeUnsupported);
        }
    }

    #[test]
    fn fd_and_cs_on_euler_solution_map() {
        let time = TimeSpec::linspace(0.0, 1.0, 11).unwrap();
        let solver = SolverConfig::euler(0.01);
        let fd = sensitivity_matrix(Method::Fd, &LinearGrowth, &[2.0], &[0.5], &time, &solver).unwrap();
        let cs = sensitivity_matrix(Method::Cs, &LinearGrowth, &[2.0], &[0.5], &time, &solver).unwrap();
        let an = sensitivity_matrix(Method::Analytic, &LinearGrowth, &[2.0], &[0.5], &time, &solver).unwrap();
        assert!(relative_error(&an, &cs).unwrap() <= 1e-14);
        assert!(relative_error(&an, &fd).unwrap() <= 1e-6);
    }

    #[test]
    fn compare_table_shape() {
        let time = TimeSpec::linspace(0.0, 50.0, 51).unwrap();
        let table = cross_compare(
            &LotkaVolterra,
            &[1000.0, 20.0],
            &[0.015, 1e-4, 0.03, 1e-4],
            &time,
            &SolverConfig::euler(0.1),
            &Method::ALL,
        )
        .unwrap();
        let entries = table.entries();
        assert_eq!(entries.len(), 6);
        assert!(entries.iter().all(|(_, _, e)| e.is_finite() && *e >= 0.0));
        assert_eq!(
            table.get(Method::Fd, Method::Analytic),
            table.get(Method::Analytic, Method::Fd)
        );
        assert_eq!(table.get(Method::Cs, Method::Cs), Some(0.0));
    }
}
