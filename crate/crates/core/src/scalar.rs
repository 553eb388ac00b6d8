use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used throughout the numerical core.
///
/// Implemented for `f32` and `f64`. Constants are written as `T::lit(0.5)`
/// rather than `T::from_f64(0.5).unwrap()`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two_pi() -> Self {
        Self::TAU()
    }

    /// `10^(db/10)`
    #[inline]
    fn from_db(db: Self) -> Self {
        Self::lit(10.0).powf(db / Self::lit(10.0))
    }

    /// Power in dBm to watts.
    #[inline]
    fn from_dbm(dbm: Self) -> Self {
        Self::from_db(dbm - Self::lit(30.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversions() {
        assert!((f64::from_dbm(40.0) - 10.0).abs() < 1e-12);
        assert!((f64::from_dbm(-90.0) - 1e-12).abs() < 1e-24);
        assert!((f32::from_db(-30.0) - 1e-3).abs() < 1e-9);
    }
}
