//! Scalar abstraction shared by the linear-algebra layers.
//!
//! Everything that only manipulates matrices (states, entropies, the SDP
//! solver, envelopes) is written against [`Real`], so it runs in `f32` for
//! quick exploration and in `f64` for certified results. Numerical
//! tolerances are part of the scalar: an `f32` build cannot honour the
//! `1e-12` Hermiticity tolerance used for `f64`.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt;

pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + fmt::Display
    + fmt::LowerExp
    + serde::Serialize
    + serde::de::DeserializeOwned
{
    /// Per-entry tolerance for self-adjointness.
    fn hermitian_tol() -> Self;
    /// Tolerance on `tr ρ = 1`.
    fn trace_tol() -> Self;
    /// Most negative eigenvalue accepted for a positive semidefinite state.
    fn psd_tol() -> Self;
    /// Eigenvalues below this are treated as exact zeros in logarithms.
    fn eig_floor() -> Self;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn hermitian_tol() -> Self {
        1e-12
    }
    fn trace_tol() -> Self {
        1e-10
    }
    fn psd_tol() -> Self {
        1e-10
    }
    fn eig_floor() -> Self {
        1e-14
    }
}

impl Real for f32 {
    fn hermitian_tol() -> Self {
        1e-5
    }
    fn trace_tol() -> Self {
        1e-5
    }
    fn psd_tol() -> Self {
        1e-5
    }
    fn eig_floor() -> Self {
        1e-7
    }
}

/// `2√2`, the largest CHSH value quantum theory allows.
pub fn tsirelson<T: Real>() -> T {
    T::lit(2.0) * T::lit(2.0).sqrt()
}
