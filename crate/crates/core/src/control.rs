//! Quaternion-logarithm tracking controller, hysteresis automaton and the switched law.
//!
//! The switched law is the continuous law with the tracking error `e` replaced by `h e`,
//! where `h ∈ {-1, +1}` is held by a hysteresis automaton of half-width `δ`. With `h = +1`
//! the two coincide exactly, and `δ = 1` never switches.

use nalgebra::{Matrix3, Vector3};

use crate::attmath::{gmat_with, quat_log_with, rotation_of, sgn_hat, skew, LogOptions, UnitQuat};
use crate::error::{Error, Result};
use crate::estimation::{check_spd, coupled_bias_estimate, ObserverGains, ObserverState};
use crate::plant::{InertiaModel, ReferenceState};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains<T: Real> {
    pub k_c: Matrix3<T>,
    pub lambda_c: T,
}

impl<T: Real> ControllerGains<T> {
    pub fn new(k_c: Matrix3<T>, lambda_c: T) -> Result<Self> {
        check_spd(&k_c, "K_c")?;
        if !(lambda_c > T::zero()) {
            return Err(Error::InvalidArgument(format!("lambda_c must be positive, got {lambda_c}")));
        }
        Ok(Self { k_c, lambda_c })
    }
}

/// Everything the closed loop needs besides the time-varying signals.
#[derive(Debug, Clone, Copy)]
pub struct LoopParams<T: Real> {
    pub inertia: InertiaModel<T>,
    pub controller: ControllerGains<T>,
    pub observer: ObserverGains<T>,
    pub log_opts: LogOptions<T>,
}

/// Discrete switching variable with its hysteresis half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisState<T: Real> {
    h: i8,
    delta: T,
}

impl<T: Real> HysteresisState<T> {
    pub fn new(h: i8, delta: T) -> Result<Self> {
        if h != 1 && h != -1 {
            return Err(Error::InvalidArgument(format!("h must be ±1, got {h}")));
        }
        if !(delta >= T::zero() && delta <= T::one()) {
            return Err(Error::InvalidArgument(format!("delta must lie in [0, 1], got {delta}")));
        }
        Ok(Self { h, delta })
    }

    /// `h(0) = sgn(e0(0))`.
    pub fn auto(e0: T, delta: T) -> Result<Self> {
        Self::new(sgn_hat(e0), delta)
    }

    #[inline]
    pub fn h(&self) -> i8 {
        self.h
    }

    #[inline]
    pub fn delta(&self) -> T {
        self.delta
    }

    /// True when `(h, e0)` lies in the jump set `h e0 ≤ -δ`.
    pub fn in_jump_set(&self, e0: T) -> bool {
        h_times(self.h, e0) <= -self.delta
    }
}

#[inline]
fn h_times<T: Real>(h: i8, x: T) -> T {
    if h < 0 {
        -x
    } else {
        x
    }
}

/// One evaluation of the jump rule: `h ← sgn(e0)` when `h e0 ≤ -δ`, otherwise unchanged.
pub fn hysteresis_update<T: Real>(hs: HysteresisState<T>, e0: T) -> HysteresisState<T> {
    if hs.in_jump_set(e0) {
        HysteresisState { h: sgn_hat(e0), delta: hs.delta }
    } else {
        hs
    }
}

/// `e = q_d⁻¹ ⊗ q`.
pub fn tracking_error<T: Real>(q: &UnitQuat<T>, q_d: &UnitQuat<T>) -> UnitQuat<T> {
    q_d.conj() * *q
}

/// Controller output together with the intermediates the log and certificates need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput<T: Real> {
    pub tau: Vector3<T>,
    pub z: Vector3<T>,
    pub omega_r: Vector3<T>,
    pub e: UnitQuat<T>,
    pub h: i8,
    pub b_hat: Vector3<T>,
    pub omega_hat: Vector3<T>,
    /// `ω̂̇_r`, evaluated algebraically.
    pub omega_r_dot_hat: Vector3<T>,
    pub g: Matrix3<T>,
    /// `P = M G(z)`.
    pub p: Matrix3<T>,
}

/// Logarithm of `h e` and its `G` matrix, with the antipodal guard.
pub fn error_coordinates<T: Real>(he: &UnitQuat<T>, opts: &LogOptions<T>) -> Result<(Vector3<T>, Matrix3<T>)> {
    let z = quat_log_with(he, opts)?;
    let g = gmat_with(&z, opts)?;
    Ok((z, g))
}

/// Skew-symmetric part `½ (P - Pᵀ)`.
pub fn skew_part<T: Real>(p: &Matrix3<T>) -> Matrix3<T> {
    (p - p.transpose()) * T::lit(0.5)
}

/// Reference rate `ω_r = -2 λ_c z + Rᵀ(e) ω_d`.
pub fn reference_rate<T: Real>(z: &Vector3<T>, e: &UnitQuat<T>, omega_d: &Vector3<T>, lambda_c: T) -> Vector3<T> {
    rotation_of(e).transpose() * omega_d - z * (T::lit(2.0) * lambda_c)
}

/// Continuous tracking law (`h = +1`).
pub fn continuous_control<T: Real>(
    q: &UnitQuat<T>,
    omega_g: &Vector3<T>,
    reference: &ReferenceState<T>,
    observer: &ObserverState<T>,
    params: &LoopParams<T>,
) -> Result<ControlOutput<T>> {
    control_law(q, omega_g, reference, observer, 1, params)
}

/// Switched unwinding-free law: the continuous law evaluated on `h e`.
pub fn switched_control<T: Real>(
    q: &UnitQuat<T>,
    omega_g: &Vector3<T>,
    reference: &ReferenceState<T>,
    observer: &ObserverState<T>,
    hs: &HysteresisState<T>,
    params: &LoopParams<T>,
) -> Result<ControlOutput<T>> {
    control_law(q, omega_g, reference, observer, hs.h, params)
}

fn control_law<T: Real>(
    q: &UnitQuat<T>,
    omega_g: &Vector3<T>,
    reference: &ReferenceState<T>,
    observer: &ObserverState<T>,
    h: i8,
    params: &LoopParams<T>,
) -> Result<ControlOutput<T>> {
    let m = params.inertia.matrix();
    let ControllerGains { k_c, lambda_c } = params.controller;
    let two = T::lit(2.0);
    let half = T::lit(0.5);

    let e = tracking_error(q, &reference.q_d);
    let he = e.signed(h);
    let (z, g) = error_coordinates(&he, &params.log_opts)?;
    let rt = rotation_of(&e).transpose();
    let rt_wd = rt * reference.omega_d;

    let omega_r = rt_wd - z * (two * lambda_c);
    let b_hat = coupled_bias_estimate(observer, q.as_vec4(), &(m * z), &params.observer);
    let omega_hat = omega_g - b_hat;
    let omega_r_dot_hat = z * (two * lambda_c * lambda_c) + g * omega_r * lambda_c + rt * reference.omega_d_dot
        - (g * lambda_c - skew(&rt_wd)) * omega_hat;

    let p = m * g;
    let p_a = skew_part(&p);
    let tau = m * omega_r_dot_hat
        - skew(&(m * omega_hat)) * omega_r
        - g.transpose() * z * half
        - (k_c - p_a * (two * lambda_c)) * (omega_hat - omega_r);

    Ok(ControlOutput { tau, z, omega_r, e, h, b_hat, omega_hat, omega_r_dot_hat, g, p })
}

/// `√∫₀ᵀ τᵀτ dt` by the trapezoidal rule over a uniformly sampled series.
pub fn control_effort<T: Real>(tau: &[Vector3<T>], dt: T) -> T {
    control_effort_series(tau, dt).last().copied().unwrap_or_else(T::zero)
}

/// Running effort `√∫₀^{t_k} τᵀτ dt` at every sample.
pub fn control_effort_series<T: Real>(tau: &[Vector3<T>], dt: T) -> Vec<T> {
    let half = T::lit(0.5);
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(tau.len());
    for (k, t) in tau.iter().enumerate() {
        if k > 0 {
            acc += (tau[k - 1].norm_squared() + t.norm_squared()) * dt * half;
        }
        out.push(acc.sqrt());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector4;
    use proptest::prelude::*;

    fn params() -> LoopParams<f64> {
        let u = Vector3::new(1.0, 2.0, 3.0).normalize() * 10.0;
        LoopParams {
            inertia: InertiaModel::new(Matrix3::from_diagonal(&u)).unwrap(),
            controller: ControllerGains::new(Matrix3::identity(), 0.01).unwrap(),
            observer: ObserverGains::new(Matrix3::identity(), 0.5, 0.01).unwrap(),
            log_opts: LogOptions::default(),
        }
    }

    fn hs(h: i8, d: f64) -> HysteresisState<f64> {
        HysteresisState::new(h, d).unwrap()
    }

    #[test]
    fn hysteresis_examples() {
        assert_eq!(hysteresis_update(hs(1, 0.3), -0.2).h(), 1);
        assert_eq!(hysteresis_update(hs(1, 0.3), -0.31).h(), -1);
        assert_eq!(hysteresis_update(hs(1, 0.3), -0.3).h(), -1);
        assert_eq!(hysteresis_update(hs(-1, 0.3), 0.31).h(), 1);
        for &e0 in &[-0.999999, -0.5, 0.0, 0.5, 0.999999] {
            assert_eq!(hysteresis_update(hs(1, 1.0), e0).h(), 1);
            assert_eq!(hysteresis_update(hs(-1, 1.0), e0).h(), -1);
        }
        // δ = 0: the jump set includes he0 = 0, and sgn(0) = +1.
        assert_eq!(hysteresis_update(hs(-1, 0.0), 0.0).h(), 1);
    }

    #[test]
    fn hysteresis_rejects_bad_state() {
        assert!(HysteresisState::new(0, 0.3).is_err());
        assert!(HysteresisState::new(1, 1.5).is_err());
        assert!(HysteresisState::new(1, -0.1).is_err());
        assert_eq!(HysteresisState::auto(-0.2, 0.3).unwrap().h(), -1);
        assert_eq!(HysteresisState::auto(0.0, 0.3).unwrap().h(), 1);
    }

    #[test]
    fn tracking_error_examples() {
        let qd = UnitQuat::new(0.5, 0.5, 0.5, 0.5).unwrap();
        assert_abs_diff_eq!(tracking_error(&qd, &qd).as_vec4(), &Vector4::new(1.0, 0.0, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(tracking_error(&-qd, &qd).as_vec4(), &Vector4::new(-1.0, 0.0, 0.0, 0.0), epsilon = 1e-15);
    }

    fn equilibrium_reference(omega_d: Vector3<f64>) -> ReferenceState<f64> {
        ReferenceState { q_d: UnitQuat::new(0.6, 0.0, 0.8, 0.0).unwrap(), omega_d, omega_d_dot: Vector3::zeros() }
    }

    fn converged_observer(q: &UnitQuat<f64>, b: Vector3<f64>, p: &LoopParams<f64>) -> ObserverState<f64> {
        ObserverState::initial(q, b, Vector3::zeros(), &p.observer)
    }

    #[test]
    fn equilibrium_torque_holds_trajectory() {
        let p = params();
        let omega_d = Vector3::new(0.02, 0.11, -0.05);
        let reference = equilibrium_reference(omega_d);
        let q = reference.q_d;
        let b = Vector3::new(0.05, -0.05, 0.033);
        let obs = converged_observer(&q, b, &p);
        // e = 1 so Rᵀ(e) = I and ω = ω_d.
        let out = continuous_control(&q, &(omega_d + b), &reference, &obs, &p).unwrap();
        let m = p.inertia.matrix();
        assert_abs_diff_eq!(out.tau, -(skew(&(m * omega_d)) * omega_d), epsilon = 1e-15);
        let omega_dot = crate::plant::dynamics_rate(&omega_d, &out.tau, &p.inertia);
        assert_abs_diff_eq!(omega_dot, Vector3::zeros(), epsilon = 1e-15);

        let zero_ref = equilibrium_reference(Vector3::zeros());
        let out = continuous_control(&q, &b, &zero_ref, &obs, &p).unwrap();
        assert_abs_diff_eq!(out.tau, Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn antipodal_equilibrium_under_h_minus_one() {
        let p = params();
        let omega_d = Vector3::new(0.0, 0.11, 0.0);
        let reference = equilibrium_reference(omega_d);
        let b = Vector3::new(0.05, -0.05, 0.033);
        let q_plus = reference.q_d;
        let q_minus = -reference.q_d;
        let obs_plus = converged_observer(&q_plus, b, &p);
        let obs_minus = converged_observer(&q_minus, b, &p);
        let plus = continuous_control(&q_plus, &(omega_d + b), &reference, &obs_plus, &p).unwrap();
        let minus = switched_control(&q_minus, &(omega_d + b), &reference, &obs_minus, &hs(-1, 0.3), &p).unwrap();
        assert_eq!(minus.z, Vector3::zeros());
        assert_abs_diff_eq!(minus.tau, plus.tau, epsilon = 1e-15);
    }

    #[test]
    fn switched_with_positive_h_matches_continuous() {
        let p = params();
        let reference = equilibrium_reference(Vector3::new(0.0, 0.11, 0.0));
        let q = UnitQuat::new(-0.2, 0.3, 0.5, (1.0f64 - 0.04 - 0.09 - 0.25).sqrt()).unwrap();
        let obs = ObserverState { b_bar: Vector3::new(0.01, 0.02, -0.03), q_f: Vector4::new(-0.19, 0.31, 0.5, 0.78) };
        let w = Vector3::new(0.3, 0.1, -0.2);
        let a = continuous_control(&q, &w, &reference, &obs, &p).unwrap();
        let b = switched_control(&q, &w, &reference, &obs, &hs(1, 0.3), &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singularity_near_antipode() {
        let p = params();
        let reference = equilibrium_reference(Vector3::zeros());
        let q = -reference.q_d;
        let obs = converged_observer(&q, Vector3::zeros(), &p);
        let r = continuous_control(&q, &Vector3::zeros(), &reference, &obs, &p);
        assert!(matches!(r, Err(Error::Singularity(_))));
    }

    #[test]
    fn effort_examples() {
        assert_eq!(control_effort(&[Vector3::<f64>::zeros(); 10], 0.1), 0.0);
        let series = vec![Vector3::new(1.0, 0.0, 0.0); 401];
        assert_abs_diff_eq!(control_effort(&series, 0.01), 2.0, epsilon = 1e-12);
        assert_eq!(control_effort::<f64>(&[], 0.1), 0.0);
    }

    proptest! {
        #[test]
        fn post_jump_state_is_in_flow_set(h in prop::bool::ANY, e0 in -1.0f64..=1.0, delta in 0.0f64..=1.0) {
            let h = if h { 1 } else { -1 };
            let before = hs(h, delta);
            let after = hysteresis_update(before, e0);
            if before.in_jump_set(e0) {
                prop_assert!(f64::from(after.h()) * e0 >= 0.0);
            } else {
                prop_assert_eq!(after, before);
            }
        }

        #[test]
        fn effort_is_monotone(vals in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..50)) {
            let series: Vec<_> = vals.into_iter().map(Vector3::from).collect();
            let e = control_effort_series(&series, 0.01);
            prop_assert!(e.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn skew_part_is_skew(vals in prop::array::uniform9(-3.0f64..3.0)) {
            let p = Matrix3::from_row_slice(&vals);
            let pa = skew_part(&p);
            prop_assert_eq!(pa + pa.transpose(), Matrix3::zeros());
        }
    }
}
