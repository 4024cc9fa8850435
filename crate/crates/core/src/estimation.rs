//! Gyro-bias observers built on a first-order quaternion filter.
//!
//! Both variants share the filter `q̇_f = γ (q - q_f)` and produce the bias estimate
//! algebraically from the internal state `b̄`:
//!
//! * ideal:   `b̂ = b̄ - K_o Jᵀ(q_f) q`
//! * coupled: `b̂ = b̄ - K_o Jᵀ(q_f) q - 2 λ_c M z`
//!
//! `q_f` lives in R⁴ and is never renormalized.

use nalgebra::{Matrix3, SymmetricEigen, Vector3, Vector4};

use crate::attmath::{jmat, UnitQuat};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverState<T: Real> {
    pub b_bar: Vector3<T>,
    pub q_f: Vector4<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGains<T: Real> {
    pub k_o: Matrix3<T>,
    pub gamma: T,
    /// Only used by the coupled variant.
    pub lambda_c: T,
}

/// Which observer the stepper integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObserverVariant {
    /// Stand-alone observer.
    Ideal,
    /// Observer coupled to the tracking controller through `-2 λ_c M z`.
    #[default]
    Coupled,
    /// Test hook: `q_f ≡ q`, with the filter injection `γ Jᵀ(q) q_f` replaced by its
    /// infinite-bandwidth limit `-Jᵀ(q) q̇`. Uses the true quaternion rate.
    ExactFilter,
}

/// Checks `M = Mᵀ` (to `1e-12` relative) and positive definiteness.
pub fn check_spd<T: Real>(m: &Matrix3<T>, what: &str) -> Result<()> {
    if m.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    let scale = m.amax().max(T::one());
    if (m - m.transpose()).amax() > T::lit(1e-12) * scale {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    let min_eig = SymmetricEigen::new(*m).eigenvalues.min();
    if min_eig <= T::zero() {
        return Err(Error::InvalidArgument(format!(
            "{what} is not positive definite (min eigenvalue {min_eig})"
        )));
    }
    Ok(())
}

impl<T: Real> ObserverGains<T> {
    pub fn new(k_o: Matrix3<T>, gamma: T, lambda_c: T) -> Result<Self> {
        check_spd(&k_o, "K_o")?;
        if !(gamma > T::zero()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        if !(lambda_c >= T::zero()) {
            return Err(Error::InvalidArgument(format!("lambda_c must be non-negative, got {lambda_c}")));
        }
        Ok(Self { k_o, gamma, lambda_c })
    }
}

impl<T: Real> ObserverState<T> {
    /// Initial state with `q_f(0) = q(0)` and `b̄` chosen so that `b̂(0) = b_hat0`.
    ///
    /// `mz0` is `M z(0)` for the coupled variant and zero otherwise.
    pub fn initial(q0: &UnitQuat<T>, b_hat0: Vector3<T>, mz0: Vector3<T>, gains: &ObserverGains<T>) -> Self {
        let q_f = *q0.as_vec4();
        // Jᵀ(q) q = 0, so only the coupling term needs compensating.
        let b_bar = b_hat0 + gains.k_o * (jmat(&q_f).transpose() * q0.as_vec4()) + mz0 * (T::lit(2.0) * gains.lambda_c);
        Self { b_bar, q_f }
    }
}

/// `b̂ = b̄ - K_o Jᵀ(q_f) q`.
pub fn ideal_bias_estimate<T: Real>(state: &ObserverState<T>, q: &Vector4<T>, gains: &ObserverGains<T>) -> Vector3<T> {
    state.b_bar - gains.k_o * (jmat(&state.q_f).transpose() * q)
}

/// Right-hand sides `(ḃ̄, q̇_f)` of the ideal observer for a given `ω̂ = ω_g - b̂`.
pub fn ideal_observer_rates<T: Real>(
    state: &ObserverState<T>,
    q: &Vector4<T>,
    omega_hat: &Vector3<T>,
    gains: &ObserverGains<T>,
) -> (Vector3<T>, Vector4<T>) {
    let jf_t = jmat(&state.q_f).transpose();
    let jq = jmat(q);
    let half = T::lit(0.5);
    let b_bar_rate = gains.k_o * (jf_t * (jq * omega_hat)) * half + gains.k_o * (jq.transpose() * state.q_f) * gains.gamma;
    let q_f_rate = (q - state.q_f) * gains.gamma;
    (b_bar_rate, q_f_rate)
}

/// `b̂ = b̄ - K_o Jᵀ(q_f) q - 2 λ_c M z`, where `mz = M z`.
pub fn coupled_bias_estimate<T: Real>(
    state: &ObserverState<T>,
    q: &Vector4<T>,
    mz: &Vector3<T>,
    gains: &ObserverGains<T>,
) -> Vector3<T> {
    ideal_bias_estimate(state, q, gains) - mz * (T::lit(2.0) * gains.lambda_c)
}

/// Coupled observer rates: the ideal rates plus `-2 λ_c² M z` on `ḃ̄`.
pub fn coupled_observer_rates<T: Real>(
    state: &ObserverState<T>,
    q: &Vector4<T>,
    omega_hat: &Vector3<T>,
    mz: &Vector3<T>,
    gains: &ObserverGains<T>,
) -> (Vector3<T>, Vector4<T>) {
    let (b_bar_rate, q_f_rate) = ideal_observer_rates(state, q, omega_hat, gains);
    let l = gains.lambda_c;
    (b_bar_rate - mz * (T::lit(2.0) * l * l), q_f_rate)
}

/// `ḃ̄` for [`ObserverVariant::ExactFilter`], given the true quaternion rate `q̇`.
pub fn exact_filter_rate<T: Real>(
    q: &Vector4<T>,
    q_dot: &Vector4<T>,
    omega_hat: &Vector3<T>,
    gains: &ObserverGains<T>,
) -> Vector3<T> {
    let jq_t = jmat(q).transpose();
    gains.k_o * (jq_t * (jmat(q) * omega_hat)) * T::lit(0.5) - gains.k_o * (jq_t * q_dot)
}

/// Analysis form of the coupled bias-error dynamics,
/// `b̃̇ = -½ K_o Jᵀ(q_f) J(q) b̃ - λ_c P (ω - ω_r)` with `P = M G(z)`.
pub fn coupled_error_rate<T: Real>(
    q: &Vector4<T>,
    q_f: &Vector4<T>,
    b_tilde: &Vector3<T>,
    p: &Matrix3<T>,
    omega_minus_omega_r: &Vector3<T>,
    gains: &ObserverGains<T>,
) -> Vector3<T> {
    -(gains.k_o * (jmat(q_f).transpose() * (jmat(q) * b_tilde))) * T::lit(0.5) - p * omega_minus_omega_r * gains.lambda_c
}
