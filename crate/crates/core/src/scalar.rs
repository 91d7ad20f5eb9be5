//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type the tensor library and the models are generic over.
///
/// Implemented for `f32` and `f64`. Gradient checks run in `f64`; training
/// may use either.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only if it is not representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Numerically stable `ln(1 + e^x)`.
    #[inline]
    fn softplus(self) -> Self {
        let zero = Self::zero();
        self.max(zero) + (-self.abs()).exp().ln_1p()
    }

    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_ln2_at_zero() {
        assert!((0.0f64.softplus() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((0.0f32.softplus() - std::f32::consts::LN_2).abs() < 1e-7);
    }

    #[test]
    fn softplus_large_arguments_do_not_overflow() {
        assert_eq!(800.0f64.softplus(), 800.0);
        assert!((-800.0f64).softplus() >= 0.0);
    }

    #[test]
    fn sigmoid_symmetric() {
        for x in [-30.0f64, -1.0, 0.0, 2.5, 40.0] {
            assert!((x.sigmoid() + (-x).sigmoid() - 1.0).abs() < 1e-12);
        }
    }
}
