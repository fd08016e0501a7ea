//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use nalgebra as na;
use num_traits as nt;

/// Real scalar the simulation core is generic over (`f32` or `f64`).
pub trait Real: na::RealField + Copy + nt::FromPrimitive + nt::ToPrimitive + Display + Debug {
    /// Converts an `f64` literal into `Self`.
    fn lit(v: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(v).expect("literal representable in scalar type")
    }

    /// Lossy conversion to `f64` for logging and reporting.
    fn as_f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dense column vector over `T`.
pub type Vector<T> = na::DVector<T>;
/// Dense matrix over `T`.
pub type Matrix<T> = na::DMatrix<T>;

/// `true` when every entry is finite.
pub fn all_finite<T: Real>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}
