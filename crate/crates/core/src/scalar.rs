//! Scalar abstraction: everything numeric in this crate is generic over a
//! floating-point type.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// The scalar bound used throughout the crate: `f32` or `f64` (or any other
/// `num_traits::Float` with the usual conversions).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Sum<Self> + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Sum<T> + 'static
{
}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn cast<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("constant representable in the scalar type")
}

/// Lossy view of a scalar as `f64`, for error messages and reports.
#[inline]
pub fn to_f64<F: Scalar>(x: F) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Kahan compensated accumulator; long grid sums must not lose the low bits
/// the tolerance budgets account for.
#[derive(Debug, Clone, Copy)]
pub struct KahanSum<F: Scalar> {
    sum: F,
    carry: F,
}

impl<F: Scalar> KahanSum<F> {
    pub fn new() -> Self {
        Self {
            sum: F::zero(),
            carry: F::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: F) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> F {
        self.sum
    }
}

impl<F: Scalar> Default for KahanSum<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> FromIterator<F> for KahanSum<F> {
    fn from_iter<I: IntoIterator<Item = F>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn ksum<F: Scalar, I: IntoIterator<Item = F>>(iter: I) -> F {
    iter.into_iter().collect::<KahanSum<F>>().value()
}
