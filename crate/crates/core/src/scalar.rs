use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the solver is generic over. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for types that cannot represent finite `f64`s.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar conversion from f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("scalar conversion from usize")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
}

/// An exponent that may be infinite, used for L^p norms and the integrability exponent of `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Exponent<T> {
    pub fn from_value(p: T) -> Self {
        if p.is_infinite() && p > T::zero() {
            Exponent::Infinite
        } else {
            Exponent::Finite(p)
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    pub fn value(&self) -> T {
        match *self {
            Exponent::Finite(p) => p,
            Exponent::Infinite => T::infinity(),
        }
    }

    /// Hölder conjugate: 1/p + 1/p* = 1, with 1* = ∞ and ∞* = 1.
    pub fn conjugate(&self) -> Self {
        match *self {
            Exponent::Infinite => Exponent::Finite(T::one()),
            Exponent::Finite(p) if p == T::one() => Exponent::Infinite,
            Exponent::Finite(p) => Exponent::Finite(p / (p - T::one())),
        }
    }
}

impl<T: Scalar> Display for Exponent<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinite => write!(f, "inf"),
        }
    }
}
