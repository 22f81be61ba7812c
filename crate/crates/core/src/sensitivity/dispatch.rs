use num_complex::Complex64;

use super::{forward_sensitivity_solve, JacobianProvider, OdeSystem};
use crate::error::{Error, Result};
use crate::scalars::{Dual1, Scalar};
use crate::solvers::{solve, SolverConfig, TimeSpec, Trajectory};

/// How a scalar kind integrates a parameterised system.
///
/// Plain kinds run the solver directly. Dual numbers never enter the solver:
/// they go through [`dual_aware_solve`], which integrates the augmented system
/// in the next lower kind. Nested duals therefore recurse until they reach `f64`.
pub trait SolveDispatch: Scalar {
    fn solve_system<F: OdeSystem>(
        sys: &F,
        y0: &[Self],
        p: &[Self],
        time: &TimeSpec,
        solver: &SolverConfig,
    ) -> Result<Trajectory<Self>>;
}

fn check_dims<S, F: OdeSystem>(sys: &F, y0: &[S], p: &[S]) -> Result<()> {
    if y0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: sys.state_dim(),
            got: y0.len(),
        });
    }
    if p.len() != sys.param_dim() {
        return Err(Error::DimensionMismatch {
            what: "parameters",
            expected: sys.param_dim(),
            got: p.len(),
        });
    }
    Ok(())
}

fn direct_solve<S: Scalar, F: OdeSystem>(
    sys: &F,
    y0: &[S],
    p: &[S],
    time: &TimeSpec,
    solver: &SolverConfig,
) -> Result<Trajectory<S>> {
    check_dims(sys, y0, p)?;
    solve(|t, y: &[S], dy: &mut [S]| sys.rhs(t, y, p, dy), time, y0, solver)
}

impl SolveDispatch for f64 {
    fn solve_system<F: OdeSystem>(
        sys: &F,
        y0: &[f64],
        p: &[f64],
        time: &TimeSpec,
        solver: &SolverConfig,
    ) -> Result<Trajectory<f64>> {
        direct_solve(sys, y0, p, time, solver)
    }
}

impl SolveDispatch for Complex64 {
    fn solve_system<F: OdeSystem>(
        sys: &F,
        y0: &[Complex64],
        p: &[Complex64],
        time: &TimeSpec,
        solver: &SolverConfig,
    ) -> Result<Trajectory<Complex64>> {
        direct_solve(sys, y0, p, time, solver)
    }
}

impl<T: SolveDispatch> SolveDispatch for Dual1<T> {
    fn solve_system<F: OdeSystem>(
        sys: &F,
        y0: &[Dual1<T>],
        p: &[Dual1<T>],
        time: &TimeSpec,
        solver: &SolverConfig,
    ) -> Result<Trajectory<Dual1<T>>> {
        dual_aware_solve(sys, y0, p, time, solver)
    }
}

/// Solves with dual-valued initial state and parameters.
///
/// The tangent seeds are split off, the augmented system of `sys` is integrated
/// once in the lower scalar kind `T` with Jacobians from dual AD, and the output
/// tangents are rebuilt as `W·seed(y0) + V·seed(p)` at every output time. The
/// primal outputs are the `Y` block of the augmented solve.
pub fn dual_aware_solve<T: SolveDispatch, F: OdeSystem>(
    sys: &F,
    y0: &[Dual1<T>],
    p: &[Dual1<T>],
    time: &TimeSpec,
    solver: &SolverConfig,
) -> Result<Trajectory<Dual1<T>>> {
    check_dims(sys, y0, p)?;
    let (y0_primal, y0_seed): (Vec<T>, Vec<T>) = y0.iter().map(|d| (d.primal, d.tangent)).unzip();
    let (p_primal, p_seed): (Vec<T>, Vec<T>) = p.iter().map(|d| (d.primal, d.tangent)).unzip();

    let bundle = forward_sensitivity_solve(sys, JacobianProvider::DualAd, &p_primal, &y0_primal, time, solver)?;

    let (m, k) = (sys.state_dim(), sys.param_dim());
    let mut states = Vec::with_capacity(bundle.len() * m);
    for r in 0..bundle.len() {
        let (v, w) = (bundle.v(r), bundle.w(r));
        for i in 0..m {
            let mut tangent = T::zero();
            for j in 0..m {
                tangent += w[(i, j)] * y0_seed[j];
            }
            for j in 0..k {
                tangent += v[(i, j)] * p_seed[j];
            }
            states.push(Dual1::new(bundle.states()[(r, i)], tangent));
        }
    }
    Trajectory::from_rows(bundle.times().to_vec(), states, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearGrowth, LotkaVolterra};
    use crate::scalars::Dual2;
    use crate::sensitivity::forward_sensitivity_solve;
    use crate::solvers::{euler_solve, ToleranceConfig};
    use approx::assert_relative_eq;

    const P: [f64; 4] = [0.015, 0.0001, 0.03, 0.0001];
    const Y0: [f64; 2] = [1000.0, 20.0];

    fn lift(x: &[f64]) -> Vec<Dual1> {
        x.iter().map(|&v| Dual1::constant(v)).collect()
    }

    #[test]
    fn zero_payloads_round_trip() {
        let time = TimeSpec::linspace(0.0, 100.0, 101).unwrap();
        let solver = SolverConfig::euler(0.1);
        let out = Dual1::solve_system(&LotkaVolterra, &lift(&Y0), &lift(&P), &time, &solver).unwrap();
        let plain = f64::solve_system(&LotkaVolterra, &Y0, &P, &time, &solver).unwrap();
        for r in 0..out.len() {
            for c in 0..2 {
                assert_eq!(out.row(r)[c].tangent, 0.0);
                assert_eq!(out.row(r)[c].primal, plain.row(r)[c]);
            }
        }
    }

    #[test]
    fn unit_seeds_reproduce_sensitivity_columns() {
        let time = TimeSpec::linspace(0.0, 200.0, 201).unwrap();
        for solver in [SolverConfig::euler(0.1), SolverConfig::rk23()] {
            let bundle =
                forward_sensitivity_solve(&LotkaVolterra, JacobianProvider::DualAd, &P, &Y0, &time, &solver).unwrap();
            for col in 0..6 {
                let mut y0 = lift(&Y0);
                let mut p = lift(&P);
                if col < 2 {
                    y0[col].tangent = 1.0;
                } else {
                    p[col - 2].tangent = 1.0;
                }
                let out = dual_aware_solve(&LotkaVolterra, &y0, &p, &time, &solver).unwrap();
                for r in 0..out.len() {
                    for i in 0..2 {
                        let want = if col < 2 {
                            bundle.w(r)[(i, col)]
                        } else {
                            bundle.v(r)[(i, col - 2)]
                        };
                        let got = out.row(r)[i].tangent;
                        assert!((got - want).abs() <= 1e-13 * want.abs().max(1e-300), "{got} {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn dual_through_euler_commutes_with_augmentation() {
        // Euler run directly on dual numbers (no dispatch) equals the Euler
        // run of the augmented system.
        let time = TimeSpec::linspace(0.0, 300.0, 301).unwrap();
        let bundle = forward_sensitivity_solve(
            &LotkaVolterra,
            JacobianProvider::Analytic,
            &P,
            &Y0,
            &time,
            &SolverConfig::euler(0.1),
        )
        .unwrap();
        for k in 0..4 {
            let mut p = lift(&P);
            p[k].tangent = 1.0;
            let traj = euler_solve(
                |t, y: &[Dual1], dy: &mut [Dual1]| LotkaVolterra.rhs(t, y, &p, dy),
                &time,
                &lift(&Y0),
                0.1,
            )
            .unwrap();
            for r in 0..traj.len() {
                for i in 0..2 {
                    let want = bundle.v(r)[(i, k)];
                    let got = traj.row(r)[i].tangent;
                    assert!(
                        (got - want).abs() <= 1e-13 * want.abs().max(1e-300),
                        "p{k} row {r}: {got} {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn second_order_closed_form() {
        // y' = a·y, y(1) = y0·e^a, d²y/da² = y0·e^a at t = 1
        let a = Dual2::seeded(0.5, 1.0, 1.0);
        let y0 = Dual2::from_f64(2.0);
        let tol = ToleranceConfig::with_tolerances(1e-10, 1e-12);
        let out = Dual2::solve_system(
            &LinearGrowth,
            &[y0],
            &[a],
            &TimeSpec::points(vec![0.0, 1.0]).unwrap(),
            &SolverConfig::Rk23(tol),
        )
        .unwrap();
        let y1 = out.row(1)[0];
        let e = 0.5f64.exp();
        assert_relative_eq!(y1.value(), 2.0 * e, max_relative = 1e-7);
        assert_relative_eq!(y1.du(), 2.0 * e, max_relative = 1e-7);
        assert_relative_eq!(y1.dv(), 2.0 * e, max_relative = 1e-7);
        assert_relative_eq!(y1.duv(), 2.0 * e, max_relative = 1e-6);
    }

    #[test]
    fn second_order_mixed_payload_is_symmetric() {
        let time = TimeSpec::linspace(0.0, 50.0, 51).unwrap();
        let solver = SolverConfig::euler(0.1);
        let run = |u: usize, v: usize| {
            let p: Vec<Dual2> = P
                .iter()
                .enumerate()
                .map(|(i, &x)| Dual2::seeded(x, (i == u) as u8 as f64, (i == v) as u8 as f64))
                .collect();
            let y0: Vec<Dual2> = Y0.iter().map(|&x| Dual2::from_f64(x)).collect();
            Dual2::solve_system(&LotkaVolterra, &y0, &p, &time, &solver).unwrap()
        };
        let (a, b) = (run(0, 3), run(3, 0));
        let last = a.len() - 1;
        for i in 0..2 {
            let (x, y) = (a.row(last)[i].duv(), b.row(last)[i].duv());
            assert!((x - y).abs() <= 1e-10 * x.abs().max(y.abs()), "{x} {y}");
        }
    }

    #[test]
    fn dimension_checks() {
        let time = TimeSpec::points(vec![0.0, 1.0]).unwrap();
        let err = dual_aware_solve(&LotkaVolterra, &lift(&[1.0]), &lift(&P), &time, &SolverConfig::rk23()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }
}
