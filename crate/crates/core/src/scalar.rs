//! Scalar abstraction shared by the sparse kernels and the elementwise
//! regularization operators.
//!
//! Real fields implement [`RealScalar`]; every field (real or complex)
//! implements [`Scalar`], which exposes the handful of operations the
//! factorizations need (conjugation, modulus, embedding of a real value).

use std::fmt::Debug;
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FromPrimitive, NumAssign, Zero};

/// Real floating-point type usable throughout the crate.
pub trait RealScalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Default + Send + Sync + 'static
{
    /// Converts a literal `f64` constant into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }
}

impl RealScalar for f32 {}
impl RealScalar for f64 {}

/// A real or complex field element.
pub trait Scalar: Copy + NumAssign + std::ops::Neg<Output = Self> + Debug + Default + PartialEq + Send + Sync + 'static {
    type Real: RealScalar;

    fn conj(self) -> Self;
    /// Modulus `|x|`.
    fn modulus(self) -> Self::Real;
    /// Squared modulus `|x|^2`.
    fn modulus_sqr(self) -> Self::Real;
    fn from_real(r: Self::Real) -> Self;
    fn real(self) -> Self::Real;
    fn imag(self) -> Self::Real;
    fn scale(self, r: Self::Real) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_real_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            type Real = $t;
            #[inline]
            fn conj(self) -> Self {
                self
            }
            #[inline]
            fn modulus(self) -> Self::Real {
                self.abs()
            }
            #[inline]
            fn modulus_sqr(self) -> Self::Real {
                self * self
            }
            #[inline]
            fn from_real(r: Self::Real) -> Self {
                r
            }
            #[inline]
            fn real(self) -> Self::Real {
                self
            }
            #[inline]
            fn imag(self) -> Self::Real {
                0.0
            }
            #[inline]
            fn scale(self, r: Self::Real) -> Self {
                self * r
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_real_scalar!(f32);
impl_real_scalar!(f64);

impl<R: RealScalar> Scalar for Complex<R> {
    type Real = R;
    #[inline]
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
    #[inline]
    fn modulus(self) -> R {
        self.norm()
    }
    #[inline]
    fn modulus_sqr(self) -> R {
        self.norm_sqr()
    }
    #[inline]
    fn from_real(r: R) -> Self {
        Complex::new(r, R::zero())
    }
    #[inline]
    fn real(self) -> R {
        self.re
    }
    #[inline]
    fn imag(self) -> R {
        self.im
    }
    #[inline]
    fn scale(self, r: R) -> Self {
        Complex::new(self.re * r, self.im * r)
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Euclidean norm of a slice.
pub fn norm2<T: Scalar>(x: &[T]) -> T::Real {
    x.iter()
        .map(|v| v.modulus_sqr())
        .fold(T::Real::zero(), |a, b| a + b)
        .sqrt()
}

/// Hermitian inner product `<x, y> = sum conj(x_i) y_i`.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .fold(T::zero(), |acc, (a, b)| acc + a.conj() * *b)
}

/// `y += a * x`
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

/// Euclidean norm of `x - y`.
pub fn diff_norm2<T: Scalar>(x: &[T], y: &[T]) -> T::Real {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (*a - *b).modulus_sqr())
        .fold(T::Real::zero(), |a, b| a + b)
        .sqrt()
}
