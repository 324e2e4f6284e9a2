//! Scalar abstraction shared by every numerical module.
//!
//! All of the model code is written against [`Real`], so the same operators,
//! spectra and amplitudes can be evaluated in `f32` or `f64`. Complex values
//! are `num_complex::Complex<T>`; the helpers below route complex arithmetic
//! through nalgebra's `ComplexField` so that no `num_traits::Float` bound is
//! needed (the two traits would otherwise make method calls ambiguous).

use nalgebra::{ComplexField, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};

/// Floating-point scalar the model is generic over.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + LowerExp + Debug + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

pub type C<T> = Complex<T>;

/// Lossy conversion from an `f64` literal.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Conversion of a count or index.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn cr<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> C<T> {
    Complex::new(T::one(), T::zero())
}

/// The imaginary unit.
#[inline]
pub fn ci<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::one())
}

#[inline]
pub fn cabs<T: Real>(z: C<T>) -> T {
    ComplexField::modulus(z)
}

#[inline]
pub fn cabs2<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub fn carg<T: Real>(z: C<T>) -> T {
    ComplexField::argument(z)
}

#[inline]
pub fn cexp<T: Real>(z: C<T>) -> C<T> {
    ComplexField::exp(z)
}

#[inline]
pub fn csin<T: Real>(z: C<T>) -> C<T> {
    ComplexField::sin(z)
}

#[inline]
pub fn ccos<T: Real>(z: C<T>) -> C<T> {
    ComplexField::cos(z)
}

#[inline]
pub fn ccosh<T: Real>(z: C<T>) -> C<T> {
    ComplexField::cosh(z)
}

#[inline]
pub fn csinh<T: Real>(z: C<T>) -> C<T> {
    ComplexField::sinh(z)
}

/// `e^{i x}` for real `x`.
#[inline]
pub fn phase<T: Real>(x: T) -> C<T> {
    Complex::new(x.cos(), x.sin())
}

#[inline]
pub fn is_finite_c<T: Real>(z: C<T>) -> bool {
    let re = to_f64(z.re);
    let im = to_f64(z.im);
    re.is_finite() && im.is_finite()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helpers_agree_in_both_precisions() {
        let z64 = cplx(0.3_f64, -1.2);
        let z32 = cplx(0.3_f32, -1.2);
        assert!((cabs(z64) - (0.09_f64 + 1.44).sqrt()).abs() < 1e-15);
        assert!((cabs(z32) - (0.09_f32 + 1.44).sqrt()).abs() < 1e-6);
        let e = cexp(ci::<f64>() * cr(std::f64::consts::PI));
        assert!((e.re + 1.0).abs() < 1e-15 && e.im.abs() < 1e-15);
        assert_eq!(phase(0.0_f64), cone());
    }
}
