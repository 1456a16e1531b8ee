//! Scalar abstraction shared by the geometric code paths.

use nalgebra as na;
use num_traits as nt;

/// Floating point scalar usable by the geometry, rendering and epipolar code.
pub trait Real:
    na::RealField + Copy + nt::FloatConst + nt::FromPrimitive + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self` (rounding for `f32`).
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lit(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

#[inline]
pub(crate) fn deg_to_rad<T: Real>(deg: T) -> T {
    deg * T::PI() / T::lit(180.0)
}

#[inline]
pub(crate) fn rad_to_deg<T: Real>(rad: T) -> T {
    rad * T::lit(180.0) / T::PI()
}
