//! Scalar abstraction shared by every numeric module.
//!
//! All state vectors, transfer matrices and repeater formulas are generic over
//! [`Real`], implemented for `f32` and `f64`. Tolerances are carried by the
//! scalar type so that single precision gets thresholds it can actually meet.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar used throughout the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Max-entry tolerance on `U^dagger U - I` accepted for a transfer matrix.
    const UNITARY_TOL: f64;
    /// Amplitudes with magnitude at or below this are dropped from sparse states.
    const PRUNE: f64;
    /// Allowed deviation of a squared norm from one for a "normalized" state.
    const NORM_TOL: f64;

    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f64 {
    const UNITARY_TOL: f64 = 1e-10;
    const PRUNE: f64 = 1e-12;
    const NORM_TOL: f64 = 1e-10;
}

impl Real for f32 {
    const UNITARY_TOL: f64 = 1e-5;
    const PRUNE: f64 = 1e-6;
    const NORM_TOL: f64 = 1e-5;
}

/// Complex amplitude over a [`Real`] scalar.
pub type Amp<T> = Complex<T>;

#[cfg(test)]
pub(crate) fn c<T: Real>(re: f64, im: f64) -> Amp<T> {
    Complex::new(T::lit(re), T::lit(im))
}

#[inline]
pub(crate) fn czero<T: Real>() -> Amp<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn cone<T: Real>() -> Amp<T> {
    Complex::new(T::one(), T::zero())
}

#[inline]
pub(crate) fn creal<T: Real>(re: T) -> Amp<T> {
    Complex::new(re, T::zero())
}

/// Widens a complex amplitude to double precision.
#[inline]
pub fn to_c64<T: Real>(z: Amp<T>) -> Complex<f64> {
    Complex::new(z.re.as_f64(), z.im.as_f64())
}
