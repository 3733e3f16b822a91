//! Thin wrappers over `libm` so the crate builds without `std`.
//!
//! Routing every transcendental through `libm` (instead of `std` under the
//! `std` feature) also makes results identical across feature sets.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Largest power of two not exceeding `|x|`, as an exponent. Used to
/// prescale sums of large products so squaring cannot overflow; scaling by
/// powers of two is exact in binary floating point.
#[inline]
pub fn exponent_of(x: f64) -> i32 {
    let (_, exp) = libm::frexp(x);
    exp - 1
}

/// `x * 2^n` without rounding error.
#[inline]
pub fn scale_by_pow2(x: f64, n: i32) -> f64 {
    libm::ldexp(x, n)
}

/// Clamp an overflowed result back into the representable range. Values
/// beyond the double range saturate at the largest finite double so
/// serialized artifacts stay numeric; NaN passes through untouched.
#[inline]
pub fn saturate(x: f64) -> f64 {
    if x == f64::INFINITY {
        f64::MAX
    } else if x == f64::NEG_INFINITY {
        f64::MIN
    } else {
        x
    }
}
