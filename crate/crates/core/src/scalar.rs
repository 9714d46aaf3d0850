//! Numeric backends.
//!
//! Every marginal-level computation (bounds, couplings, the LP oracle) is
//! generic over [`Scalar`], which is implemented for `f64` and for
//! arbitrary-precision rationals ([`Rational`]). Rational mode compares
//! exactly; float mode uses the fixed tolerances below.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational number.
pub type Rational = BigRational;

/// Sum-to-one tolerance for float validation.
pub const SUM_TOL: f64 = 1e-9;
/// Slack allowed below zero for float nonnegativity checks.
pub const NEG_TOL: f64 = 1e-12;
/// Pivot tolerance of the float simplex.
pub const PIVOT_TOL: f64 = 1e-12;
/// Constructed entries in `[-SNAP_TOL, 0)` are treated as subtraction noise.
pub const SNAP_TOL: f64 = 1e-13;

pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
    + 'static
{
    /// True for exact arithmetic.
    const EXACT: bool;

    fn sum_tolerance() -> Self;
    fn neg_tolerance() -> Self;
    fn pivot_tolerance() -> Self;
    fn to_f64(&self) -> f64;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn from_usize(v: usize) -> Self {
        Self::from_ratio(v as i64, 1)
    }

    /// Float mode maps values in `[-1e-13, 0)` to exactly zero.
    fn snap(self) -> Self;

    fn abs_val(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn sum_tolerance() -> Self {
        SUM_TOL
    }
    fn neg_tolerance() -> Self {
        NEG_TOL
    }
    fn pivot_tolerance() -> Self {
        PIVOT_TOL
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn snap(self) -> Self {
        if (-SNAP_TOL..0.0).contains(&self) {
            0.0
        } else {
            self
        }
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn sum_tolerance() -> Self {
        Rational::zero()
    }
    fn neg_tolerance() -> Self {
        Rational::zero()
    }
    fn pivot_tolerance() -> Self {
        Rational::zero()
    }
    fn to_f64(&self) -> f64 {
        // Ratio<BigInt>::to_f64 handles huge numerators and denominators.
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }
    fn snap(self) -> Self {
        self
    }
    fn abs_val(&self) -> Self {
        self.abs()
    }
}

/// Shorthand for building a rational `num/den`.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::from_ratio(num, den)
}

/// Converts a float to the exact rational it represents.
pub fn rational_from_f64(v: f64) -> Option<Rational> {
    Rational::from_float(v)
}

pub(crate) fn max_of<T: Scalar>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

pub(crate) fn sum<T: Scalar>(values: &[T]) -> T {
    values.iter().cloned().fold(T::zero(), |acc, v| acc + v)
}

/// Upper-tail sums: `out[j] = sum_{k >= j} values[k]`.
pub(crate) fn tail_sums<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); values.len()];
    let mut acc = T::zero();
    for j in (0..values.len()).rev() {
        acc = acc + values[j].clone();
        out[j] = acc.clone();
    }
    out
}
