//! Quaternion and small-matrix primitives.
//!
//! Quaternions are stored scalar first, `[q0, q1, q2, q3]`, with the Hamilton product
//! `q ⊗ p = [q0 p0 - qv·pv, q0 pv + p0 qv + qv × pv]`.

use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Matrix4x3, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest deviation from unit norm accepted when constructing a [`UnitQuat`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Unit quaternion on S³, scalar first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat<T: Real>(Vector4<T>);

impl<T: Real> UnitQuat<T> {
    pub fn identity() -> Self {
        Self(Vector4::new(T::one(), T::zero(), T::zero(), T::zero()))
    }

    /// Builds a quaternion from components that must already be unit within
    /// [`UNIT_TOLERANCE`]; the result is renormalized.
    pub fn new(q0: T, q1: T, q2: T, q3: T) -> Result<Self> {
        Self::from_vec4(Vector4::new(q0, q1, q2, q3))
    }

    /// Same as [`UnitQuat::new`] from a 4-vector.
    pub fn from_vec4(v: Vector4<T>) -> Result<Self> {
        check_finite(&v)?;
        let n = v.norm();
        if (n - T::one()).abs() > T::lit(UNIT_TOLERANCE) {
            return Err(Error::InvalidArgument(format!(
                "quaternion norm {n} deviates from 1 by more than {UNIT_TOLERANCE}"
            )));
        }
        Ok(Self(v / n))
    }

    /// Like [`UnitQuat::from_vec4`] but keeps the components bit-for-bit.
    pub fn from_vec4_unscaled(v: Vector4<T>) -> Result<Self> {
        Self::from_vec4(v)?;
        Ok(Self(v))
    }

    /// Projects any finite non-zero 4-vector onto S³ by scaling.
    pub fn normalize(v: Vector4<T>) -> Result<Self> {
        check_finite(&v)?;
        let n = v.norm();
        if n <= T::default_epsilon() {
            return Err(Error::InvalidArgument("cannot normalize a zero quaternion".into()));
        }
        Ok(Self(v / n))
    }

    pub fn from_scalar_vector(q0: T, qv: Vector3<T>) -> Result<Self> {
        Self::from_vec4(Vector4::new(q0, qv.x, qv.y, qv.z))
    }

    #[inline]
    pub fn scalar(&self) -> T {
        self.0.x
    }

    #[inline]
    pub fn vector(&self) -> Vector3<T> {
        Vector3::new(self.0.y, self.0.z, self.0.w)
    }

    #[inline]
    pub fn as_vec4(&self) -> &Vector4<T> {
        &self.0
    }

    #[inline]
    pub fn to_array(&self) -> [T; 4] {
        [self.0.x, self.0.y, self.0.z, self.0.w]
    }

    pub fn conj(&self) -> Self {
        quat_conj(self)
    }

    pub fn rotation(&self) -> Matrix3<T> {
        rotation_of(self)
    }

    /// Multiplies by the discrete variable `h ∈ {-1, +1}`.
    pub fn signed(&self, h: i8) -> Self {
        if h < 0 {
            -*self
        } else {
            *self
        }
    }
}

impl<T: Real> Neg for UnitQuat<T> {
    type Output = Self;

    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl<T: Real> Mul for UnitQuat<T> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        quat_mul(&self, &rhs)
    }
}

fn check_finite<T: Real, const N: usize>(v: &nalgebra::SVector<T, N>) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("non-finite component in {v:?}")))
    }
}

/// Raw Hamilton product in R⁴ (no normalization).
pub fn quat_product_raw<T: Real>(q: &Vector4<T>, p: &Vector4<T>) -> Vector4<T> {
    let (q0, qv) = (q.x, Vector3::new(q.y, q.z, q.w));
    let (p0, pv) = (p.x, Vector3::new(p.y, p.z, p.w));
    let s = q0 * p0 - qv.dot(&pv);
    let v = pv * q0 + qv * p0 + qv.cross(&pv);
    Vector4::new(s, v.x, v.y, v.z)
}

/// `q ⊗ p`, renormalized.
pub fn quat_mul<T: Real>(q: &UnitQuat<T>, p: &UnitQuat<T>) -> UnitQuat<T> {
    let r = quat_product_raw(&q.0, &p.0);
    let n = r.norm();
    UnitQuat(r / n)
}

/// Conjugate, which is also the inverse on S³.
pub fn quat_conj<T: Real>(q: &UnitQuat<T>) -> UnitQuat<T> {
    UnitQuat(Vector4::new(q.0.x, -q.0.y, -q.0.z, -q.0.w))
}

/// Skew-symmetric cross-product matrix: `skew(u) v = u × v`.
pub fn skew<T: Real>(u: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -u.z, u.y, u.z, z, -u.x, -u.y, u.x, z)
}

/// `R(q) = I + 2 q0 S(qv) + 2 S(qv)²`, mapping body-frame vectors to the inertial frame.
pub fn rotation_of<T: Real>(q: &UnitQuat<T>) -> Matrix3<T> {
    let two = T::lit(2.0);
    let s = skew(&q.vector());
    Matrix3::identity() + s * (two * q.scalar()) + s * s * two
}

/// Lower 3×3 block of `J(x)`: `x0 I + S(xv)`.
pub fn jvmat<T: Real>(x: &Vector4<T>) -> Matrix3<T> {
    Matrix3::identity() * x.x + skew(&Vector3::new(x.y, x.z, x.w))
}

/// `J(x) = [-xvᵀ; x0 I + S(xv)]` for any `x ∈ R⁴`, so that `q̇ = ½ J(q) ω`.
pub fn jmat<T: Real>(x: &Vector4<T>) -> Matrix4x3<T> {
    let jv = jvmat(x);
    let mut j = Matrix4x3::zeros();
    j[(0, 0)] = -x.y;
    j[(0, 1)] = -x.z;
    j[(0, 2)] = -x.w;
    j.fixed_view_mut::<3, 3>(1, 0).copy_from(&jv);
    j
}

/// Numerical thresholds for the logarithm, its inverse and `G(z)`.
#[derive(Debug, Clone, Copy)]
pub struct LogOptions<T> {
    /// Below this norm the closed forms are replaced by their Taylor series.
    pub series_threshold: T,
    /// Guard band around the antipodal singularity `e0 = -1` (`‖z‖ = π`).
    pub eps_z: T,
}

impl<T: Real> Default for LogOptions<T> {
    fn default() -> Self {
        Self { series_threshold: T::lit(1e-4), eps_z: T::lit(1e-6) }
    }
}

/// Quaternion logarithm `z(e) = arccos(e0) ev/‖ev‖`, with `‖z‖ ∈ [0, π)`.
pub fn quat_log<T: Real>(e: &UnitQuat<T>) -> Result<Vector3<T>> {
    quat_log_with(e, &LogOptions::default())
}

pub fn quat_log_with<T: Real>(e: &UnitQuat<T>, opts: &LogOptions<T>) -> Result<Vector3<T>> {
    let e0 = e.scalar();
    if e0 <= -T::one() + opts.eps_z {
        return Err(Error::Singularity(format!("e0 = {e0} is within {} of -1", opts.eps_z)));
    }
    let ev = e.vector();
    let s = ev.norm();
    if s < opts.series_threshold {
        // arccos(e0)/‖ev‖ = asin(s)/s for e0 > 0.
        let s2 = s * s;
        let factor = T::one() + s2 / T::lit(6.0) + s2 * s2 * T::lit(3.0 / 40.0);
        return Ok(ev * factor);
    }
    // atan2(‖ev‖, e0) equals arccos(e0) on S³ and keeps full precision near e0 = ±1.
    let angle = s.atan2(e0);
    Ok(ev * (angle / s))
}

/// Inverse of [`quat_log`]: `[cos‖z‖, sin‖z‖ z/‖z‖]`.
pub fn quat_exp<T: Real>(z: &Vector3<T>) -> Result<UnitQuat<T>> {
    quat_exp_with(z, &LogOptions::default())
}

pub fn quat_exp_with<T: Real>(z: &Vector3<T>, opts: &LogOptions<T>) -> Result<UnitQuat<T>> {
    check_finite(z)?;
    let n = z.norm();
    if n >= T::pi() {
        return Err(Error::Domain(format!("‖z‖ = {n} must be below π")));
    }
    let (sin, cos) = n.sin_cos();
    let sinc = if n < opts.series_threshold {
        let n2 = n * n;
        T::one() - n2 / T::lit(6.0) + n2 * n2 / T::lit(120.0)
    } else {
        sin / n
    };
    let v = z * sinc;
    UnitQuat::normalize(Vector4::new(cos, v.x, v.y, v.z))
}

/// Below this norm the `G(z)` coefficient always uses its series; the closed form
/// loses about `ε/x²` to cancellation.
pub const COEFFICIENT_SERIES_LIMIT: f64 = 2e-2;

/// Scalar coefficient `(1 - x cot x) / x²` of `S(z)²` in `G(z)`.
///
/// The series `1/3 + x²/45 + 2x⁴/945 + x⁶/4725` is used below
/// `max(series_threshold, COEFFICIENT_SERIES_LIMIT)`.
pub fn gmat_coefficient<T: Real>(x: T, series_threshold: T) -> T {
    if x < series_threshold.max(T::lit(COEFFICIENT_SERIES_LIMIT)) {
        let x2 = x * x;
        T::one() / T::lit(3.0) + x2 * (T::one() / T::lit(45.0) + x2 * (T::lit(2.0) / T::lit(945.0) + x2 / T::lit(4725.0)))
    } else {
        let (sin, cos) = x.sin_cos();
        (T::one() - x * cos / sin) / (x * x)
    }
}

/// `G(z) = I + S(z) + c(‖z‖) S(z)²`, the map in `ż = ½ G(z) ω̃`.
pub fn gmat<T: Real>(z: &Vector3<T>) -> Result<Matrix3<T>> {
    gmat_with(z, &LogOptions::default())
}

pub fn gmat_with<T: Real>(z: &Vector3<T>, opts: &LogOptions<T>) -> Result<Matrix3<T>> {
    check_finite(z)?;
    let n = z.norm();
    if n >= T::pi() - opts.eps_z {
        return Err(Error::Singularity(format!("‖z‖ = {n} is within {} of π", opts.eps_z)));
    }
    let s = skew(z);
    Ok(Matrix3::identity() + s + s * s * gmat_coefficient(n, opts.series_threshold))
}

/// Sign function with `sgn(0) = +1`.
#[inline]
pub fn sgn_hat<T: Real>(x: T) -> i8 {
    if x >= T::zero() {
        1
    } else {
        -1
    }
}
