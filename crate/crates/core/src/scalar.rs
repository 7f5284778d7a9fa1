//! Scalar abstraction shared by every numeric module.
//!
//! Model evaluation, boundary geometry and quadrature are written against
//! [`Real`], which is implemented for `f32` and `f64`. Corner weights and
//! exact Shapley sums use [`Exact`], an arbitrary-precision rational.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, One, ToPrimitive, Zero};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Exact rational used for corner arithmetic.
pub type Exact = BigRational;

/// Floating-point scalar the models are evaluated in.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Exact rational with the same value as `self`. `self` must be finite.
    fn to_exact(self) -> Exact;

    /// Nearest representable value to `q`.
    fn from_exact(q: &Exact) -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal out of range")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize out of range")
    }
}

impl Real for f64 {
    fn to_exact(self) -> Exact {
        BigRational::from_float(self).expect("non-finite value has no exact form")
    }

    fn from_exact(q: &Exact) -> Self {
        exact_to_f64(q)
    }
}

impl Real for f32 {
    fn to_exact(self) -> Exact {
        BigRational::from_float(self).expect("non-finite value has no exact form")
    }

    fn from_exact(q: &Exact) -> Self {
        // Rounding through f64 first can double-round; go direct when possible.
        match q.to_f32() {
            Some(v) => v,
            None => exact_to_f64(q) as f32,
        }
    }
}

fn exact_to_f64(q: &Exact) -> f64 {
    if q.is_zero() {
        return 0.0;
    }
    q.to_f64().unwrap_or_else(|| {
        if q > &Exact::zero() {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    })
}

/// `numer / denom` as an exact rational.
pub fn ratio(numer: i64, denom: i64) -> Exact {
    Exact::new(BigInt::from(numer), BigInt::from(denom))
}

/// Scalars the exact Shapley enumeration can run in: floats and rationals.
pub trait ShapleyScalar: Clone + Zero + One + std::ops::Sub<Output = Self> + Debug {
    /// `numer / denom`, exactly when the type allows it.
    fn from_ratio(numer: u64, denom: u64) -> Self;
    fn mul_ref(&self, other: &Self) -> Self;
}

impl ShapleyScalar for f64 {
    fn from_ratio(numer: u64, denom: u64) -> Self {
        numer as f64 / denom as f64
    }
    fn mul_ref(&self, other: &Self) -> Self {
        self * other
    }
}

impl ShapleyScalar for f32 {
    fn from_ratio(numer: u64, denom: u64) -> Self {
        (numer as f64 / denom as f64) as f32
    }
    fn mul_ref(&self, other: &Self) -> Self {
        self * other
    }
}

impl ShapleyScalar for Exact {
    fn from_ratio(numer: u64, denom: u64) -> Self {
        Exact::new(BigInt::from(numer), BigInt::from(denom))
    }
    fn mul_ref(&self, other: &Self) -> Self {
        self * other
    }
}

/// Exact sum of a slice of floats.
pub fn exact_sum<T: Real>(values: &[T]) -> Exact {
    values
        .iter()
        .fold(Exact::zero(), |acc, v| acc + v.to_exact())
}

/// Deterministic pairwise summation.
pub fn pairwise_sum<T: Real>(values: &[T]) -> T {
    match values.len() {
        0 => T::zero(),
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_round_trip_is_lossless() {
        for v in [0.1_f64, -3.75, 1e-300, 123456.789, f64::MIN_POSITIVE] {
            assert_eq!(f64::from_exact(&v.to_exact()), v);
        }
        for v in [0.1_f32, -2.5, 7.0e-30] {
            assert_eq!(f32::from_exact(&v.to_exact()), v);
        }
    }

    #[test]
    fn exact_sum_is_not_float_sum() {
        let xs = [0.1_f64, 0.2, -0.3];
        let float_sum: f64 = xs.iter().sum();
        assert_ne!(exact_sum(&xs), float_sum.to_exact());
        assert_eq!(exact_sum(&[0.5_f64, 0.25, -0.75]), Exact::zero());
    }

    #[test]
    fn pairwise_sum_small() {
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
    }
}
