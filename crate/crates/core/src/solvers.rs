//! Explicit Euler and Bogacki–Shampine 3(2) integrators.
//!
//! Both integrators are generic over [`Scalar`], so a model that accepts any
//! scalar kind can be integrated on dual or complex numbers without changes.
//! Time is always real.
//!
//! Output is controlled by [`TimeSpec`]: a span returns every internal step,
//! a vector of points returns the state at exactly those times. For the
//! adaptive solver the points never influence step selection; states between
//! accepted steps come from the cubic Hermite continuous extension.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalars::Scalar;

/// Relative slack when deciding whether an interval is an integer number of steps.
const GRID_SLACK: f64 = 1e-9;

/// Requested output times of a solve.
#[derive(Clone, Debug, PartialEq)]
pub enum TimeSpec {
    /// Integrate over `[t0, t_end]` and report the solver's own steps.
    Span { t0: f64, t_end: f64 },
    /// Report the state at exactly these strictly increasing times.
    Points(Vec<f64>),
}

impl TimeSpec {
    pub fn span(t0: f64, t_end: f64) -> Result<Self> {
        let spec = TimeSpec::Span { t0, t_end };
        spec.validate()?;
        Ok(spec)
    }

    pub fn points(times: Vec<f64>) -> Result<Self> {
        let spec = TimeSpec::Points(times);
        spec.validate()?;
        Ok(spec)
    }

    /// `n` equally spaced points from `t0` to `t_end` inclusive.
    pub fn linspace(t0: f64, t_end: f64, n: usize) -> Result<Self> {
        if n == 1 {
            return Self::points(vec![t0]);
        }
        let denom = (n - 1) as f64;
        let times = (0..n)
            .map(|i| {
                if i + 1 == n {
                    t_end
                } else {
                    t0 + (t_end - t0) * (i as f64) / denom
                }
            })
            .collect();
        Self::points(times)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TimeSpec::Span { t0, t_end } => {
                if !(t0.is_finite() && t_end.is_finite()) {
                    return Err(Error::InvalidTimeSpec("non-finite endpoint".into()));
                }
                if t_end <= t0 {
                    return Err(Error::InvalidTimeSpec(format!("t_end ({t_end}) must exceed t0 ({t0})")));
                }
            }
            TimeSpec::Points(ts) => {
                if ts.is_empty() {
                    return Err(Error::InvalidTimeSpec("no output points".into()));
                }
                if ts.iter().any(|t| !t.is_finite()) {
                    return Err(Error::InvalidTimeSpec("non-finite output point".into()));
                }
                if ts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidTimeSpec(
                        "output points must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn t0(&self) -> f64 {
        match self {
            TimeSpec::Span { t0, .. } => *t0,
            TimeSpec::Points(ts) => ts[0],
        }
    }

    pub fn t_end(&self) -> f64 {
        match self {
            TimeSpec::Span { t_end, .. } => *t_end,
            TimeSpec::Points(ts) => ts[ts.len() - 1],
        }
    }

    pub fn is_points(&self) -> bool {
        matches!(self, TimeSpec::Points(_))
    }
}

/// Times and states returned by a solver; row `i` is the state at `times[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    times: Vec<f64>,
    states: Vec<S>,
    dim: usize,
}

impl<S: Scalar> Trajectory<S> {
    fn with_capacity(dim: usize, rows: usize) -> Self {
        Trajectory {
            times: Vec::with_capacity(rows),
            states: Vec::with_capacity(rows * dim),
            dim,
        }
    }

    /// Builds a trajectory from row-major state storage.
    pub fn from_rows(times: Vec<f64>, states: Vec<S>, dim: usize) -> Result<Self> {
        if states.len() != times.len() * dim {
            return Err(Error::DimensionMismatch {
                what: "trajectory states",
                expected: times.len() * dim,
                got: states.len(),
            });
        }
        Ok(Trajectory { times, states, dim })
    }

    fn push(&mut self, t: f64, y: &[S]) {
        self.times.push(t);
        self.states.extend_from_slice(y);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_row(&self) -> &[S] {
        self.row(self.len() - 1)
    }

    /// All states, row-major (time-major).
    pub fn states(&self) -> &[S] {
        &self.states
    }

    /// States as an `N_out × M` matrix.
    pub fn to_matrix(&self) -> DMatrix<S> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.states)
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Trajectory<T> {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(f).collect(),
            dim: self.dim,
        }
    }
}

/// Step-size control for [`rk23_solve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToleranceConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub safety: f64,
    pub min_factor: f64,
    pub max_factor: f64,
    pub max_steps: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            rel_tol: 1e-3,
            abs_tol: 1e-6,
            safety: 0.8,
            min_factor: 0.2,
            max_factor: 5.0,
            max_steps: 1_000_000,
        }
    }
}

impl ToleranceConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        ToleranceConfig {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidTolerance(msg.to_string()));
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("rel_tol and abs_tol must be positive");
        }
        if !(0.0 < self.min_factor && self.min_factor < 1.0 && 1.0 < self.max_factor) {
            return bad("require 0 < min_factor < 1 < max_factor");
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad("safety must lie in (0, 1]");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}

/// Integrator selection shared by every driver in the crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverConfig {
    Euler { dt: f64 },
    Rk23(ToleranceConfig),
}

impl SolverConfig {
    pub fn euler(dt: f64) -> Self {
        SolverConfig::Euler { dt }
    }

    pub fn rk23() -> Self {
        SolverConfig::Rk23(ToleranceConfig::default())
    }
}

/// Integrates `y' = rhs(t, y)` with the configured method.
pub fn solve<S, F>(rhs: F, time: &TimeSpec, y0: &[S], config: &SolverConfig) -> Result<Trajectory<S>>
where
    S: Scalar,
    F: FnMut(f64, &[S], &mut [S]),
{
    match config {
        SolverConfig::Euler { dt } => euler_solve(rhs, time, y0, *dt),
        SolverConfig::Rk23(tol) => rk23_solve(rhs, time, y0, tol),
    }
}

fn all_finite<S: Scalar>(y: &[S]) -> bool {
    y.iter().all(Scalar::is_finite)
}

/// Number of equal substeps of size at most `dt` covering `length`.
fn substeps(length: f64, dt: f64) -> usize {
    let ratio = length / dt;
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= GRID_SLACK * nearest.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    (n as usize).max(1)
}

/// Fixed-step explicit Euler: `y_k = y_{k-1} + δt·f(t_{k-1}, y_{k-1})`.
///
/// In span mode the last step is shortened to land on `t_end`. In points mode
/// each interval between requested times is split into equal substeps of at
/// most `dt`.
pub fn euler_solve<S, F>(mut rhs: F, time: &TimeSpec, y0: &[S], dt: f64) -> Result<Trajectory<S>>
where
    S: Scalar,
    F: FnMut(f64, &[S], &mut [S]),
{
    time.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidStep(dt));
    }
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut dy = vec![S::zero(); dim];
    let mut step = 0usize;

    let mut advance = |t: f64, h: f64, y: &mut [S], step: &mut usize| -> Result<()> {
        rhs(t, y, &mut dy);
        for (yi, &di) in y.iter_mut().zip(&dy) {
            *yi += di.scale(h);
        }
        *step += 1;
        if !all_finite(y) {
            return Err(Error::NonFinite { step: *step, t: t + h });
        }
        Ok(())
    };

    match time {
        TimeSpec::Span { t0, t_end } => {
            let n = substeps(t_end - t0, dt);
            let mut grid: Vec<f64> = (0..=n).map(|k| t0 + dt * k as f64).collect();
            // the last grid point is either t_end itself or a shortened step to it
            if grid[n] > *t_end || (t_end - grid[n]).abs() <= GRID_SLACK * dt {
                grid[n] = *t_end;
            } else {
                grid.push(*t_end);
            }
            let mut traj = Trajectory::with_capacity(dim, grid.len());
            traj.push(grid[0], &y);
            for w in grid.windows(2) {
                advance(w[0], w[1] - w[0], &mut y, &mut step)?;
                traj.push(w[1], &y);
            }
            Ok(traj)
        }
        TimeSpec::Points(ts) => {
            let mut traj = Trajectory::with_capacity(dim, ts.len());
            traj.push(ts[0], &y);
            for w in ts.windows(2) {
                let (a, b) = (w[0], w[1]);
                let n = substeps(b - a, dt);
                let h = (b - a) / n as f64;
                for j in 0..n {
                    advance(a + h * j as f64, h, &mut y, &mut step)?;
                }
                traj.push(b, &y);
            }
            Ok(traj)
        }
    }
}

/// One Bogacki–Shampine step.
#[derive(Clone, Debug, PartialEq)]
pub struct Rk23Step<S> {
    /// Third-order advance.
    pub y_next: Vec<S>,
    /// Embedded error estimate (third minus second order solution).
    pub error: Vec<S>,
    /// `rhs(t + h, y_next)`, reused as the first stage of the next step.
    pub k4: Vec<S>,
}

/// Takes one Bogacki–Shampine 3(2) step of size `h` from `(t, y)`.
pub fn rk23_step<S, F>(mut rhs: F, t: f64, y: &[S], h: f64) -> Result<Rk23Step<S>>
where
    S: Scalar,
    F: FnMut(f64, &[S], &mut [S]),
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidStep(h));
    }
    let mut k1 = vec![S::zero(); y.len()];
    rhs(t, y, &mut k1);
    rk23_step_fsal(&mut rhs, t, y, &k1, h, 0)
}

fn rk23_step_fsal<S, F>(rhs: &mut F, t: f64, y: &[S], k1: &[S], h: f64, step: usize) -> Result<Rk23Step<S>>
where
    S: Scalar,
    F: FnMut(f64, &[S], &mut [S]),
{
    let n = y.len();
    let stage_error = || Error::NonFinite { step, t };
    if !all_finite(k1) {
        return Err(stage_error());
    }
    let mut tmp = vec![S::zero(); n];
    let mut k2 = vec![S::zero(); n];
    let mut k3 = vec![S::zero(); n];
    let mut k4 = vec![S::zero(); n];

    for i in 0..n {
        tmp[i] = y[i] + k1[i].scale(0.5 * h);
    }
    rhs(t + 0.5 * h, &tmp, &mut k2);
    if !all_finite(&k2) {
        return Err(stage_error());
    }
    for i in 0..n {
        tmp[i] = y[i] + k2[i].scale(0.75 * h);
    }
    rhs(t + 0.75 * h, &tmp, &mut k3);
    if !all_finite(&k3) {
        return Err(stage_error());
    }
    let mut y_next = vec![S::zero(); n];
    for i in 0..n {
        y_next[i] = y[i] + (k1[i].scale(2.0 / 9.0) + k2[i].scale(1.0 / 3.0) + k3[i].scale(4.0 / 9.0)).scale(h);
    }
    rhs(t + h, &y_next, &mut k4);
    if !all_finite(&k4) {
        return Err(stage_error());
    }
    let error = (0..n)
        .map(|i| {
            (k1[i].scale(-5.0 / 72.0) + k2[i].scale(1.0 / 12.0) + k3[i].scale(1.0 / 9.0) - k4[i].scale(1.0 / 8.0))
                .scale(h)
        })
        .collect();
    Ok(Rk23Step { y_next, error, k4 })
}

/// Scaled max-norm of the local error; a step is accepted iff this is at most 1.
fn error_norm<S: Scalar>(err: &[S], y: &[S], y_next: &[S], tol: &ToleranceConfig) -> f64 {
    err.iter()
        .zip(y.iter().zip(y_next))
        .map(|(e, (a, b))| e.magnitude() / (tol.abs_tol + tol.rel_tol * a.magnitude().max(b.magnitude())))
        .fold(0.0, f64::max)
}

fn initial_step<S: Scalar>(y0: &[S], f0: &[S], t0: f64, span: f64, tol: &ToleranceConfig) -> f64 {
    let scaled = |v: &[S]| {
        v.iter()
            .zip(y0)
            .map(|(vi, yi)| vi.magnitude() / (tol.abs_tol + tol.rel_tol * yi.magnitude()))
            .fold(0.0, f64::max)
    };
    let d0 = scaled(y0);
    let d1 = scaled(f0);
    let mut h = 0.1 * span;
    if d1 > 0.0 {
        h = h.min(d0 / d1);
    }
    h.max(16.0 * f64::EPSILON * (t0 + 1.0).abs())
}

/// Adaptive Bogacki–Shampine 3(2) integration with FSAL.
///
/// Span mode returns every accepted step. Points mode returns the Hermite
/// interpolant at exactly the requested times; the step sequence is the same
/// as for a span solve over `[points[0], points[last]]`.
pub fn rk23_solve<S, F>(mut rhs: F, time: &TimeSpec, y0: &[S], tol: &ToleranceConfig) -> Result<Trajectory<S>>
where
    S: Scalar,
    F: FnMut(f64, &[S], &mut [S]),
{
    time.validate()?;
    tol.validate()?;
    let dim = y0.len();
    let t0 = time.t0();
    let t_end = time.t_end();
    let points = match time {
        TimeSpec::Points(ts) => Some(ts.as_slice()),
        TimeSpec::Span { .. } => None,
    };
    let mut traj = Trajectory::with_capacity(dim, points.map_or(64, <[f64]>::len));
    traj.push(t0, y0);
    if t_end == t0 {
        return Ok(traj);
    }

    let mut y = y0.to_vec();
    let mut k1 = vec![S::zero(); dim];
    rhs(t0, &y, &mut k1);
    let mut h = initial_step(&y, &k1, t0, t_end - t0, tol);
    let mut t = t0;
    let mut next_point = 1usize;
    let mut attempts = 0usize;
    let mut accepted = 0usize;

    while t < t_end {
        if attempts >= tol.max_steps {
            return Err(Error::MaxStepsExceeded(tol.max_steps));
        }
        let h_min = 16.0 * f64::EPSILON * t.abs();
        if h < h_min {
            return Err(Error::StepUnderflow { t, h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        attempts += 1;
        let step = rk23_step_fsal(&mut rhs, t, &y, &k1, h, accepted + 1)?;
        let err = error_norm(&step.error, &y, &step.y_next, tol);
        if err <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            match points {
                None => traj.push(t_new, &step.y_next),
                Some(ts) => {
                    while next_point < ts.len() && ts[next_point] <= t_new {
                        let yq = hermite_interp(t, &y, &k1, t_new, &step.y_next, &step.k4, ts[next_point])?;
                        traj.push(ts[next_point], &yq);
                        next_point += 1;
                    }
                }
            }
            accepted += 1;
            t = t_new;
            y = step.y_next;
            k1 = step.k4;
            let factor = if err == 0.0 {
                tol.max_factor
            } else {
                (tol.safety * err.powf(-1.0 / 3.0)).clamp(tol.min_factor, tol.max_factor)
            };
            h *= factor;
        } else {
            h *= (tol.safety * err.powf(-1.0 / 3.0)).max(tol.min_factor);
        }
    }
    Ok(traj)
}

/// Cubic Hermite interpolant between `(t_a, y_a, f_a)` and `(t_b, y_b, f_b)`.
pub fn hermite_interp<S: Scalar>(
    t_a: f64,
    y_a: &[S],
    f_a: &[S],
    t_b: f64,
    y_b: &[S],
    f_b: &[S],
    t_query: f64,
) -> Result<Vec<S>> {
    if !(t_a <= t_query && t_query <= t_b) {
        return Err(Error::OutsideInterval {
            t: t_query,
            a: t_a,
            b: t_b,
        });
    }
    let n = y_a.len();
    for len in [f_a.len(), y_b.len(), f_b.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                what: "hermite data",
                expected: n,
                got: len,
            });
        }
    }
    if t_query == t_a {
        return Ok(y_a.to_vec());
    }
    if t_query == t_b {
        return Ok(y_b.to_vec());
    }
    let h = t_b - t_a;
    let s = (t_query - t_a) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s) * h;
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0) * h;
    Ok((0..n)
        .map(|i| y_a[i].scale(h00) + f_a[i].scale(h10) + y_b[i].scale(h01) + f_b[i].scale(h11))
        .collect())
}
