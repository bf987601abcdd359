//! Numeric abstraction for decomposition outputs.
//!
//! Pair statistics are accumulated as exact integer counts, so the scalar
//! type only needs to represent a ratio of two counts and support the field
//! operations used to assemble weighted totals. `f32`, `f64` and
//! [`Rational`] all qualify; the rational type makes the decomposition
//! identity hold with a residual of exactly zero.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Num, Signed, ToPrimitive};

/// Exact rational arithmetic over 128-bit integers.
pub type Rational = Ratio<i128>;

/// A number type that decomposition matrices and totals can be expressed in.
pub trait Scalar: Num + Signed + PartialOrd + Clone + Debug + Send + Sync + 'static {
    /// `numerator / denominator`; the denominator is never zero.
    fn from_counts(numerator: u128, denominator: u128) -> Self;

    /// Lossy conversion used for rendering and serialization.
    fn to_f64(&self) -> f64;

    /// Largest residual expected between a pooled statistic and its
    /// decomposed sum when computed in this type.
    fn identity_tolerance() -> Self;
}

impl Scalar for f64 {
    fn from_counts(numerator: u128, denominator: u128) -> Self {
        numerator as f64 / denominator as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn identity_tolerance() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn from_counts(numerator: u128, denominator: u128) -> Self {
        (numerator as f64 / denominator as f64) as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn identity_tolerance() -> Self {
        1e-5
    }
}

impl Scalar for Rational {
    fn from_counts(numerator: u128, denominator: u128) -> Self {
        let num = i128::try_from(numerator).expect("pair count exceeds i128");
        let den = i128::try_from(denominator).expect("pair count exceeds i128");
        Ratio::new(num, den)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn identity_tolerance() -> Self {
        Ratio::from_integer(0)
    }
}
