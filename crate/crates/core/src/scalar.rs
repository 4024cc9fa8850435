//! Scalar abstraction shared by all numeric modules.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra as na;
use num_traits as nt;

/// Real scalar usable throughout the attitude math, plant, observer and controller.
///
/// Implemented for `f32` and `f64`. Literal constants are built through [`Real::lit`].
pub trait Real:
    na::RealField + Copy + nt::FromPrimitive + nt::ToPrimitive + Debug + Display + LowerExp + 'static
{
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
