//! Scalar abstraction: the whole library is generic over the floating-point
//! type through this trait, with `f64` as the working default.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar usable throughout the library: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + rustfft::FftNum
    + nalgebra::RealField
    + Default
    + std::fmt::Display
    + std::fmt::LowerExp
{
    /// Lossy conversion from `f64`, used for constants and tolerances.
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 conversion")
    }

    fn of_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize conversion")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("to f64")
    }

    fn c(re: Self, im: Self) -> Complex<Self> {
        Complex::new(re, im)
    }

    /// `i` as a complex number.
    fn i() -> Complex<Self> {
        Complex::new(Self::zero(), Self::one())
    }

    /// `2π` in this scalar type.
    fn tau() -> Self {
        <Self as FloatConst>::TAU()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
