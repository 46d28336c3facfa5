//! Floating-point scalar abstraction used by the numeric kernels.

use num_traits::Float;

/// Floating point scalar: f32 or f64.
///
/// Everything numeric (recursions, networks, optimizer, language model) is
/// generic over this trait; the crate root exports `f64` aliases which the
/// CLI and the test suites use. Tolerances quoted in the test suites assume
/// `f64`. The conversions are required methods rather than num-traits cast
/// supertraits so `F::from_f64` stays unambiguous.
pub trait Scalar: Float + std::iter::Sum + std::fmt::Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// log(exp(a) + exp(b)) with the usual max shift.
pub fn log_add<F: Scalar>(a: F, b: F) -> F {
    if a == F::neg_infinity() {
        return b;
    }
    if b == F::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log Σ exp(xs), accumulated in slice order after a single max shift.
pub fn log_sum_exp<F: Scalar>(xs: &[F]) -> F {
    let mut hi = F::neg_infinity();
    for &x in xs {
        if x > hi {
            hi = x;
        }
    }
    if hi == F::neg_infinity() {
        return hi;
    }
    let mut acc = F::zero();
    for &x in xs {
        acc = acc + (x - hi).exp();
    }
    hi + acc.ln()
}
