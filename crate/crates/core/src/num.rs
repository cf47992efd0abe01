//! Scalar abstraction for the numeric kernels.
//!
//! Scoring rules, calibration metrics, advantage normalization, and the
//! logistic policy are written against [`Real`] so they work for both `f32`
//! and `f64`. The pipeline itself runs on [`crate::Scalar`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the math kernels: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + Sum<Self> + Debug + Display + Copy + 'static
{
    /// Lossless-enough conversion from a sample count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Mean of a slice; zero for an empty slice.
pub fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().copied().sum::<T>() / T::from_count(xs.len())
}

/// Population variance (divides by n, not n-1).
pub fn population_variance<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_count(xs.len())
}

/// Population standard deviation.
pub fn population_std<T: Real>(xs: &[T]) -> T {
    population_variance(xs).sqrt()
}

/// Dot product; panics on length mismatch.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "dot: dimension mismatch");
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Logistic link 1 / (1 + exp(-z)), numerically stable for large |z|.
pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        let e = (-z).exp();
        T::one() / (T::one() + e)
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
