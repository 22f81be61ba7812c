//! Numeric kinds that the solvers are generic over.
//!
//! Every integrator and model in this crate is written against [`Scalar`], so the
//! same code runs in plain `f64`, in complex arithmetic (for the complex-step
//! method) and on dual numbers carrying exact directional derivatives. Second
//! order payloads come from nesting: [`Dual2`] is a [`Dual1`] whose components
//! are themselves [`Dual1`] values.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Arithmetic required of a solver scalar.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Lifts a real constant; every derivative payload is exactly zero.
    fn from_f64(value: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// Real part of the primal value.
    fn re(&self) -> f64;

    /// Size used by adaptive error control. Includes derivative payloads, so
    /// perturbations carried by the scalar can influence step selection.
    fn magnitude(&self) -> f64;

    fn is_finite(&self) -> bool;

    fn exp(self) -> Self;

    fn ln(self) -> Self;

    /// Multiplies by a real constant.
    fn scale(self, factor: f64) -> Self {
        self * Self::from_f64(factor)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(value: f64) -> Self {
        value
    }

    #[inline]
    fn re(&self) -> f64 {
        *self
    }

    #[inline]
    fn magnitude(&self) -> f64 {
        self.abs()
    }

    #[inline]
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn ln(self) -> Self {
        f64::ln(self)
    }

    #[inline]
    fn scale(self, factor: f64) -> Self {
        self * factor
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn from_f64(value: f64) -> Self {
        Complex64::new(value, 0.0)
    }

    #[inline]
    fn re(&self) -> f64 {
        self.re
    }

    #[inline]
    fn magnitude(&self) -> f64 {
        self.norm()
    }

    #[inline]
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    fn exp(self) -> Self {
        Complex64::exp(self)
    }

    fn ln(self) -> Self {
        Complex64::ln(self)
    }

    #[inline]
    fn scale(self, factor: f64) -> Self {
        Complex64::new(self.re * factor, self.im * factor)
    }
}

/// First-order dual number `primal + tangent·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual1<T: Scalar = f64> {
    pub primal: T,
    pub tangent: T,
}

/// Second-order dual number realised as a dual over duals.
///
/// With `x = Dual2::seeded(x, u, v)` the four components of `f(x)` are the
/// value, `∇f·u`, `∇f·v` and the mixed second derivative `uᵀ H v`.
pub type Dual2 = Dual1<Dual1<f64>>;

impl<T: Scalar> Dual1<T> {
    #[inline]
    pub fn new(primal: T, tangent: T) -> Self {
        Dual1 { primal, tangent }
    }

    #[inline]
    pub fn constant(primal: T) -> Self {
        Dual1 {
            primal,
            tangent: T::zero(),
        }
    }

    /// Division that reports a zero-primal divisor instead of panicking.
    pub fn try_div(self, rhs: Self) -> Result<Self> {
        if rhs.primal.re() == 0.0 {
            return Err(Error::DualDivisionByZero);
        }
        Ok(self.div_unchecked(rhs))
    }

    #[inline]
    fn div_unchecked(self, rhs: Self) -> Self {
        Dual1 {
            primal: self.primal / rhs.primal,
            tangent: (self.tangent * rhs.primal - self.primal * rhs.tangent) / (rhs.primal * rhs.primal),
        }
    }
}

impl Dual2 {
    /// Lifts `value` with first-order directions `u` and `v`.
    pub fn seeded(value: f64, u: f64, v: f64) -> Self {
        Dual1::new(Dual1::new(value, u), Dual1::new(v, 0.0))
    }

    pub fn value(&self) -> f64 {
        self.primal.primal
    }

    pub fn du(&self) -> f64 {
        self.primal.tangent
    }

    pub fn dv(&self) -> f64 {
        self.tangent.primal
    }

    pub fn duv(&self) -> f64 {
        self.tangent.tangent
    }
}

impl<T: Scalar> Add for Dual1<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Dual1 {
            primal: self.primal + rhs.primal,
            tangent: self.tangent + rhs.tangent,
        }
    }
}

impl<T: Scalar> Sub for Dual1<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Dual1 {
            primal: self.primal - rhs.primal,
            tangent: self.tangent - rhs.tangent,
        }
    }
}

impl<T: Scalar> Mul for Dual1<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Dual1 {
            primal: self.primal * rhs.primal,
            tangent: self.primal * rhs.tangent + self.tangent * rhs.primal,
        }
    }
}

impl<T: Scalar> Div for Dual1<T> {
    type Output = Self;
    /// # Panics
    ///
    /// Panics when the divisor's primal is zero. Use [`Dual1::try_div`] for a
    /// fallible variant.
    #[inline]
    fn div(self, rhs: Self) -> Self {
        if rhs.primal.re() == 0.0 {
            panic!("{}", Error::DualDivisionByZero);
        }
        self.div_unchecked(rhs)
    }
}

impl<T: Scalar> Neg for Dual1<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual1 {
            primal: -self.primal,
            tangent: -self.tangent,
        }
    }
}

impl<T: Scalar> AddAssign for Dual1<T> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Scalar> SubAssign for Dual1<T> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Scalar> MulAssign for Dual1<T> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<T: Scalar> DivAssign for Dual1<T> {
    #[inline]
    fn div_assign(&mut self, rhs: Self) {
        *self = *self / rhs;
    }
}

impl<T: Scalar> Scalar for Dual1<T> {
    #[inline]
    fn from_f64(value: f64) -> Self {
        Dual1::constant(T::from_f64(value))
    }

    #[inline]
    fn re(&self) -> f64 {
        self.primal.re()
    }

    #[inline]
    fn magnitude(&self) -> f64 {
        self.primal.magnitude().max(self.tangent.magnitude())
    }

    #[inline]
    fn is_finite(&self) -> bool {
        self.primal.is_finite() && self.tangent.is_finite()
    }

    fn exp(self) -> Self {
        let e = self.primal.exp();
        Dual1 {
            primal: e,
            tangent: self.tangent * e,
        }
    }

    fn ln(self) -> Self {
        Dual1 {
            primal: self.primal.ln(),
            tangent: self.tangent / self.primal,
        }
    }

    #[inline]
    fn scale(self, factor: f64) -> Self {
        Dual1 {
            primal: self.primal.scale(factor),
            tangent: self.tangent.scale(factor),
        }
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

/// Evaluates `f` on dual inputs seeded with `seed` and returns `(f(x), J_f(x)·seed)`.
///
/// Non-finite intermediates are propagated into the result, not trapped.
pub fn eval_jvp_dual<S, F>(f: F, x: &[S], seed: &[S]) -> Result<(Vec<S>, Vec<S>)>
where
    S: Scalar,
    F: Fn(&[Dual1<S>]) -> Vec<Dual1<S>>,
{
    check_len("jvp seed", x.len(), seed.len())?;
    let lifted: Vec<Dual1<S>> = x.iter().zip(seed).map(|(&v, &s)| Dual1::new(v, s)).collect();
    let out = f(&lifted);
    Ok(out.iter().map(|d| (d.primal, d.tangent)).unzip())
}

/// Full Jacobian of `f` at `x`, one unit-seeded dual evaluation per column.
pub fn eval_jacobian_dual<S, F>(f: F, x: &[S]) -> Result<DMatrix<S>>
where
    S: Scalar,
    F: Fn(&[Dual1<S>]) -> Vec<Dual1<S>>,
{
    let n = x.len();
    let mut lifted: Vec<Dual1<S>> = x.iter().map(|&v| Dual1::constant(v)).collect();
    let mut columns: Vec<S> = Vec::new();
    let mut rows = None;
    for k in 0..n {
        lifted[k].tangent = S::one();
        let out = f(&lifted);
        lifted[k].tangent = S::zero();
        match rows {
            None => rows = Some(out.len()),
            Some(r) => check_len("jacobian output", r, out.len())?,
        }
        columns.extend(out.iter().map(|d| d.tangent));
    }
    let rows = match rows {
        Some(r) => r,
        None => {
            let lifted: Vec<Dual1<S>> = x.iter().map(|&v| Dual1::constant(v)).collect();
            f(&lifted).len()
        }
    };
    Ok(DMatrix::from_column_slice(rows, n, &columns))
}

/// Result of a second-order directional evaluation, per output component.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondDirectional {
    pub value: Vec<f64>,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub duv: Vec<f64>,
}

/// Evaluates `f` on [`Dual2`] inputs seeded in directions `u` and `v`.
///
/// `duv[i]` is `uᵀ·H_i·v` for output component `i`.
pub fn eval_second_directional<F>(f: F, x: &[f64], u: &[f64], v: &[f64]) -> Result<SecondDirectional>
where
    F: Fn(&[Dual2]) -> Vec<Dual2>,
{
    check_len("second-order direction u", x.len(), u.len())?;
    check_len("second-order direction v", x.len(), v.len())?;
    let lifted: Vec<Dual2> = x
        .iter()
        .zip(u.iter().zip(v))
        .map(|(&xi, (&ui, &vi))| Dual2::seeded(xi, ui, vi))
        .collect();
    let out = f(&lifted);
    Ok(SecondDirectional {
        value: out.iter().map(Dual2::value).collect(),
        du: out.iter().map(Dual2::du).collect(),
        dv: out.iter().map(Dual2::dv).collect(),
        duv: out.iter().map(Dual2::duv).collect(),
    })
}

/// Default complex-step increment. First-order complex steps do not cancel,
/// so the increment can sit far below the square root of machine epsilon.
pub const COMPLEX_STEP: f64 = 1e-100;

/// Column `k` of the Jacobian of `f` via `Im f(x + i·h·e_k) / h`.
pub fn complex_step_column<F>(f: F, x: &[f64], k: usize, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    if k >= x.len() {
        return Err(Error::IndexOutOfRange { index: k, len: x.len() });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidStep(h));
    }
    let mut z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    z[k].im = h;
    Ok(f(&z).iter().map(|c| c.im / h).collect())
}
