//! Concrete systems and the two-solve objective used to exercise the drivers.
//!
//! [`LotkaVolterra`] is the predator–prey model
//!
//! ```text
//! Y1' =  (ε1 − γ1·Y2)·Y1
//! Y2' = −(ε2 − γ2·Y1)·Y2
//! ```
//!
//! with parameters ordered `P = [ε1, γ1, ε2, γ2]` and hand-derived Jacobians.
//! [`LinearGrowth`] (`y' = a·y`) has closed-form sensitivities and serves as an
//! oracle; [`ZeroModel`] is a stub whose state never moves.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalars::{Dual1, Scalar};
use crate::sensitivity::{
    forward_sensitivity_solve, hessian_forward_over_reverse, jvp_solution, vjp_solution, JacobianProvider, OdeSystem,
    SolveDispatch,
};
use crate::solvers::{solve, SolverConfig, TimeSpec, ToleranceConfig};

/// Rates of the Lotka–Volterra model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LVParams {
    pub eps1: f64,
    pub gamma1: f64,
    pub eps2: f64,
    pub gamma2: f64,
}

impl Default for LVParams {
    fn default() -> Self {
        LVParams {
            eps1: 0.015,
            gamma1: 0.0001,
            eps2: 0.03,
            gamma2: 0.0001,
        }
    }
}

impl LVParams {
    pub fn new(eps1: f64, gamma1: f64, eps2: f64, gamma2: f64) -> Result<Self> {
        let p = LVParams {
            eps1,
            gamma1,
            eps2,
            gamma2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().all(|&v| v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!(
                "all Lotka-Volterra rates must be positive, got {self:?}"
            )))
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.eps1, self.gamma1, self.eps2, self.gamma2]
    }

    /// Interior fixed point `[ε2/γ2, ε1/γ1]`.
    pub fn equilibrium(&self) -> [f64; 2] {
        [self.eps2 / self.gamma2, self.eps1 / self.gamma1]
    }
}

pub fn lv_rhs<S: Scalar>(_t: f64, y: &[S], p: &[S]) -> [S; 2] {
    [(p[0] - p[1] * y[1]) * y[0], -((p[2] - p[3] * y[0]) * y[1])]
}

/// `f_Y`, row-major.
pub fn lv_jac_y<S: Scalar>(_t: f64, y: &[S], p: &[S]) -> [[S; 2]; 2] {
    [
        [p[0] - p[1] * y[1], -(p[1] * y[0])],
        [p[3] * y[1], -(p[2] - p[3] * y[0])],
    ]
}

/// `f_P`, row-major.
pub fn lv_jac_p<S: Scalar>(_t: f64, y: &[S], _p: &[S]) -> [[S; 4]; 2] {
    let zero = S::zero();
    [[y[0], -(y[0] * y[1]), zero, zero], [zero, zero, -y[1], y[0] * y[1]]]
}

/// First integral `γ2·Y1 − ε2·ln Y1 + γ1·Y2 − ε1·ln Y2` of the exact flow.
pub fn lv_invariant(y: &[f64], p: &LVParams) -> Result<f64> {
    if y.len() != 2 {
        return Err(Error::DimensionMismatch {
            what: "Lotka-Volterra state",
            expected: 2,
            got: y.len(),
        });
    }
    if !(y[0] > 0.0 && y[1] > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "invariant needs positive populations, got {y:?}"
        )));
    }
    Ok(p.gamma2 * y[0] - p.eps2 * y[0].ln() + p.gamma1 * y[1] - p.eps1 * y[1].ln())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LotkaVolterra;

impl OdeSystem for LotkaVolterra {
    fn state_dim(&self) -> usize {
        2
    }

    fn param_dim(&self) -> usize {
        4
    }

    fn rhs<S: Scalar>(&self, t: f64, y: &[S], p: &[S], dy: &mut [S]) {
        dy.copy_from_slice(&lv_rhs(t, y, p));
    }

    fn has_analytic_jacobians(&self) -> bool {
        true
    }

    fn analytic_jacobians<S: Scalar>(&self, t: f64, y: &[S], p: &[S], fy: &mut [S], fp: &mut [S]) {
        let jy = lv_jac_y(t, y, p);
        let jp = lv_jac_p(t, y, p);
        for c in 0..2 {
            for r in 0..2 {
                fy[r + 2 * c] = jy[r][c];
            }
        }
        for c in 0..4 {
            for r in 0..2 {
                fp[r + 2 * c] = jp[r][c];
            }
        }
    }
}

/// `y' = a·y` with a single state and parameter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinearGrowth;

impl OdeSystem for LinearGrowth {
    fn state_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn rhs<S: Scalar>(&self, _t: f64, y: &[S], p: &[S], dy: &mut [S]) {
        dy[0] = p[0] * y[0];
    }

    fn has_analytic_jacobians(&self) -> bool {
        true
    }

    fn analytic_jacobians<S: Scalar>(&self, _t: f64, y: &[S], p: &[S], fy: &mut [S], fp: &mut [S]) {
        fy[0] = p[0];
        fp[0] = y[0];
    }
}

/// Right-hand side identically zero; any parameters are ignored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZeroModel {
    m: usize,
    k: usize,
}

impl ZeroModel {
    pub fn new(state_dim: usize, param_dim: usize) -> Self {
        ZeroModel {
            m: state_dim,
            k: param_dim,
        }
    }
}

impl OdeSystem for ZeroModel {
    fn state_dim(&self) -> usize {
        self.m
    }

    fn param_dim(&self) -> usize {
        self.k
    }

    fn rhs<S: Scalar>(&self, _t: f64, _y: &[S], _p: &[S], dy: &mut [S]) {
        dy.fill(S::zero());
    }

    fn has_analytic_jacobians(&self) -> bool {
        true
    }

    fn analytic_jacobians<S: Scalar>(&self, _t: f64, _y: &[S], _p: &[S], fy: &mut [S], fp: &mut [S]) {
        fy.fill(S::zero());
        fp.fill(S::zero());
    }
}

/// Built-in models selectable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    LotkaVolterra,
    LinearGrowth,
    /// Zero right-hand side with the Lotka–Volterra shapes (2 states, 4 parameters).
    Zero,
}

impl Model {
    pub fn default_params(&self) -> Vec<f64> {
        match self {
            Model::LotkaVolterra | Model::Zero => LVParams::default().to_array().to_vec(),
            Model::LinearGrowth => vec![0.5],
        }
    }

    pub fn default_y0(&self) -> Vec<f64> {
        match self {
            Model::LotkaVolterra | Model::Zero => vec![1000.0, 20.0],
            Model::LinearGrowth => vec![2.0],
        }
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lv" | "lotka-volterra" => Ok(Model::LotkaVolterra),
            "linear" => Ok(Model::LinearGrowth),
            "zero" => Ok(Model::Zero),
            other => Err(Error::InvalidParameters(format!("unknown model '{other}'"))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::LotkaVolterra => "lv",
            Model::LinearGrowth => "linear",
            Model::Zero => "zero",
        })
    }
}

impl OdeSystem for Model {
    fn state_dim(&self) -> usize {
        match self {
            Model::LotkaVolterra | Model::Zero => 2,
            Model::LinearGrowth => 1,
        }
    }

    fn param_dim(&self) -> usize {
        match self {
            Model::LotkaVolterra | Model::Zero => 4,
            Model::LinearGrowth => 1,
        }
    }

    fn rhs<S: Scalar>(&self, t: f64, y: &[S], p: &[S], dy: &mut [S]) {
        match self {
            Model::LotkaVolterra => LotkaVolterra.rhs(t, y, p, dy),
            Model::LinearGrowth => LinearGrowth.rhs(t, y, p, dy),
            Model::Zero => ZeroModel::new(2, 4).rhs(t, y, p, dy),
        }
    }

    fn has_analytic_jacobians(&self) -> bool {
        true
    }

    fn analytic_jacobians<S: Scalar>(&self, t: f64, y: &[S], p: &[S], fy: &mut [S], fp: &mut [S]) {
        match self {
            Model::LotkaVolterra => LotkaVolterra.analytic_jacobians(t, y, p, fy, fp),
            Model::LinearGrowth => LinearGrowth.analytic_jacobians(t, y, p, fy, fp),
            Model::Zero => ZeroModel::new(2, 4).analytic_jacobians(t, y, p, fy, fp),
        }
    }
}

/// A Lotka–Volterra experiment: rates, initial populations, output grid and solver.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub params: LVParams,
    pub y0: [f64; 2],
    pub time: TimeSpec,
    pub solver: SolverConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            params: LVParams::default(),
            y0: [1000.0, 20.0],
            time: TimeSpec::linspace(0.0, 1000.0, DEFAULT_POINTS).expect("valid default grid"),
            solver: SolverConfig::euler(0.1),
        }
    }
}

pub const DEFAULT_POINTS: usize = 10001;

const SCENARIO_KEYS: [&str; 13] = [
    "eps1", "gamma1", "eps2", "gamma2", "y0_1", "y0_2", "t0", "t_end", "n_points", "solver", "dt", "rel_tol", "abs_tol",
];

impl Scenario {
    /// Parses the `key = value` scenario format.
    ///
    /// Blank lines and `#` comments are skipped; unknown or repeated keys are
    /// rejected. Missing keys keep their defaults. `n_points = 0` selects a
    /// plain time span instead of prescribed output points.
    pub fn parse(text: &str) -> Result<Self> {
        let defaults = Scenario::default();
        let mut values: Vec<(&str, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got '{line}'")))?;
            let key = key.trim();
            let known = SCENARIO_KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| parse_err(format!("unknown key '{key}'")))?;
            if values.iter().any(|(k, _, _)| k == known) {
                return Err(parse_err(format!("duplicate key '{key}'")));
            }
            values.push((known, value.trim().to_string(), line_no));
        }

        let lookup = |key: &str| values.iter().find(|(k, _, _)| *k == key);
        let number = |key: &str, default: f64| -> Result<f64> {
            match lookup(key) {
                None => Ok(default),
                Some((_, v, line)) => v.parse::<f64>().map_err(|_| Error::Parse {
                    line: *line,
                    message: format!("'{v}' is not a number for key '{key}'"),
                }),
            }
        };

        let d = defaults.params;
        let params = LVParams::new(
            number("eps1", d.eps1)?,
            number("gamma1", d.gamma1)?,
            number("eps2", d.eps2)?,
            number("gamma2", d.gamma2)?,
        )?;
        let y0 = [number("y0_1", defaults.y0[0])?, number("y0_2", defaults.y0[1])?];
        if !(y0[0] > 0.0 && y0[1] > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "initial populations must be positive, got {y0:?}"
            )));
        }
        let t0 = number("t0", 0.0)?;
        let t_end = number("t_end", 1000.0)?;
        let n_points = match lookup("n_points") {
            None => DEFAULT_POINTS,
            Some((_, v, line)) => v.parse::<usize>().map_err(|_| Error::Parse {
                line: *line,
                message: format!("'{v}' is not a point count"),
            })?,
        };
        let time = if n_points == 0 {
            TimeSpec::span(t0, t_end)?
        } else {
            if n_points > 1 && t_end <= t0 {
                return Err(Error::InvalidTimeSpec(format!("t_end ({t_end}) must exceed t0 ({t0})")));
            }
            TimeSpec::linspace(t0, t_end, n_points)?
        };
        let solver = match lookup("solver").map(|(_, v, line)| (v.as_str(), *line)) {
            None | Some(("euler", _)) => SolverConfig::euler(number("dt", 0.1)?),
            Some(("rk23", _)) => {
                let d = ToleranceConfig::default();
                let tol =
                    ToleranceConfig::with_tolerances(number("rel_tol", d.rel_tol)?, number("abs_tol", d.abs_tol)?);
                tol.validate()?;
                SolverConfig::Rk23(tol)
            }
            Some((other, line)) => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown solver '{other}' (expected euler or rk23)"),
                })
            }
        };
        if let SolverConfig::Euler { dt } = solver {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidStep(dt));
            }
        }
        Ok(Scenario {
            params,
            y0,
            time,
            solver,
        })
    }

    /// Serialises to the format accepted by [`Scenario::parse`].
    ///
    /// Only evenly spaced point grids and spans are representable.
    pub fn to_key_value(&self) -> String {
        let p = &self.params;
        let (t0, t_end, n) = match &self.time {
            TimeSpec::Span { t0, t_end } => (*t0, *t_end, 0),
            TimeSpec::Points(ts) => (ts[0], ts[ts.len() - 1], ts.len()),
        };
        let mut out = format!(
            "eps1 = {}\ngamma1 = {}\neps2 = {}\ngamma2 = {}\ny0_1 = {}\ny0_2 = {}\nt0 = {}\nt_end = {}\nn_points = {}\n",
            p.eps1, p.gamma1, p.eps2, p.gamma2, self.y0[0], self.y0[1], t0, t_end, n
        );
        match &self.solver {
            SolverConfig::Euler { dt } => out.push_str(&format!("solver = euler\ndt = {dt}\n")),
            SolverConfig::Rk23(tol) => out.push_str(&format!(
                "solver = rk23\nrel_tol = {}\nabs_tol = {}\n",
                tol.rel_tol, tol.abs_tol
            )),
        }
        out
    }
}

/// The objective `z = Σ y(t_end; y0, p) + Σ y(t_end; y0, p/2)` and its derivatives.
///
/// Output times must be prescribed points so that every differentiation
/// method sees the same grid.
#[derive(Clone, Debug)]
pub struct Fmain<'a, F> {
    sys: &'a F,
    time: TimeSpec,
    solver: SolverConfig,
    provider: JacobianProvider,
}

impl<'a, F: OdeSystem> Fmain<'a, F> {
    pub fn new(sys: &'a F, time: TimeSpec, solver: SolverConfig) -> Result<Self> {
        time.validate()?;
        if !time.is_points() {
            return Err(Error::SpanModeUnsupported);
        }
        Ok(Fmain {
            sys,
            time,
            solver,
            provider: JacobianProvider::default(),
        })
    }

    pub fn with_provider(mut self, provider: JacobianProvider) -> Result<Self> {
        provider.check(self.sys)?;
        self.provider = provider;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.sys.state_dim() + self.sys.param_dim()
    }

    fn check_inputs<S>(&self, y0: &[S], p: &[S]) -> Result<()> {
        if y0.len() != self.sys.state_dim() || p.len() != self.sys.param_dim() {
            return Err(Error::DimensionMismatch {
                what: "objective inputs",
                expected: self.input_dim(),
                got: y0.len() + p.len(),
            });
        }
        Ok(())
    }

    /// Evaluates the objective by integrating the original system directly.
    pub fn objective<S: Scalar>(&self, y0: &[S], p: &[S]) -> Result<S> {
        self.check_inputs(y0, p)?;
        let half: Vec<S> = p.iter().map(|&v| v.scale(0.5)).collect();
        let mut z = S::zero();
        for params in [p, &half[..]] {
            let traj = solve(
                |t, y: &[S], dy: &mut [S]| self.sys.rhs(t, y, params, dy),
                &self.time,
                y0,
                &self.solver,
            )?;
            for &v in traj.last_row() {
                z += v;
            }
        }
        Ok(z)
    }

    /// Objective on the concatenated input `(y0 ‖ p)`.
    pub fn objective_at<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let m = self.sys.state_dim();
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "objective inputs",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        self.objective(&x[..m], &x[m..])
    }

    /// Gradient w.r.t. `(y0 ‖ p)` from one unit-seeded forward propagation per input.
    pub fn gradient_forward(&self, y0: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(y0, p)?;
        let (m, k) = (self.sys.state_dim(), self.sys.param_dim());
        let half: Vec<f64> = p.iter().map(|v| v * 0.5).collect();
        let full = forward_sensitivity_solve(self.sys, self.provider, p, y0, &self.time, &self.solver)?.jacobian_pair();
        let halved =
            forward_sensitivity_solve(self.sys, self.provider, &half, y0, &self.time, &self.solver)?.jacobian_pair();
        let final_sum = |g: &DMatrix<f64>| g.row(g.nrows() - 1).sum();

        let mut grad = Vec::with_capacity(m + k);
        for j in 0..m + k {
            let mut g_y0 = vec![0.0; m];
            let mut g_p = vec![0.0; k];
            if j < m {
                g_y0[j] = 1.0;
            } else {
                g_p[j - m] = 1.0;
            }
            let d_full = final_sum(&jvp_solution(&full, &g_y0, &g_p)?);
            // p2 = p/2, so the seed on p2 is half the seed on p
            let g_p2: Vec<f64> = g_p.iter().map(|g| 0.5 * g).collect();
            let d_half = final_sum(&jvp_solution(&halved, &g_y0, &g_p2)?);
            grad.push(d_full + d_half);
        }
        Ok(grad)
    }

    /// Gradient w.r.t. `(y0 ‖ p)` from one adjoint contraction per solve.
    ///
    /// Generic over the scalar kind so it can run on dual numbers for
    /// forward-over-reverse Hessians.
    pub fn gradient_reverse<S: SolveDispatch>(&self, y0: &[S], p: &[S]) -> Result<Vec<S>> {
        self.check_inputs(y0, p)?;
        let m = self.sys.state_dim();
        let half: Vec<S> = p.iter().map(|&v| v.scale(0.5)).collect();
        let full = forward_sensitivity_solve(self.sys, self.provider, p, y0, &self.time, &self.solver)?;
        let halved = forward_sensitivity_solve(self.sys, self.provider, &half, y0, &self.time, &self.solver)?;

        // z sums the final row of each trajectory
        let n = full.len();
        let adjoint = DMatrix::from_fn(n, m, |r, _| if r + 1 == n { S::one() } else { S::zero() });
        let (a_y0, a_p) = vjp_solution(&full.jacobian_pair(), &adjoint)?;
        let (a_y0_half, a_p_half) = vjp_solution(&halved.jacobian_pair(), &adjoint)?;

        let mut grad: Vec<S> = a_y0.iter().zip(&a_y0_half).map(|(&a, &b)| a + b).collect();
        grad.extend(a_p.iter().zip(&a_p_half).map(|(&a, &b)| a + b.scale(0.5)));
        Ok(grad)
    }

    /// Hessian w.r.t. `(y0 ‖ p)`, forward mode over [`Fmain::gradient_reverse`].
    pub fn hessian(&self, y0: &[f64], p: &[f64]) -> Result<DMatrix<f64>> {
        self.check_inputs(y0, p)?;
        let m = self.sys.state_dim();
        let x0: Vec<f64> = y0.iter().chain(p).copied().collect();
        hessian_forward_over_reverse(|x: &[Dual1]| self.gradient_reverse(&x[..m], &x[m..]), &x0)
    }
}
