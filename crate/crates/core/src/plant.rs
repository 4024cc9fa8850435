//! Rigid-body rotational plant, reference trajectories and the coupled fixed-step integrator.

use std::ops::{Add, Mul};

use nalgebra::{Matrix3, Vector3, Vector4};

use crate::attmath::{jmat, skew, UnitQuat};
use crate::control::{error_coordinates, tracking_error, LoopParams};
use crate::error::{Error, Result};
use crate::estimation::{
    check_spd, coupled_bias_estimate, coupled_observer_rates, exact_filter_rate, ideal_bias_estimate,
    ideal_observer_rates, ObserverState, ObserverVariant,
};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState<T: Real> {
    pub q: UnitQuat<T>,
    pub omega: Vector3<T>,
}

/// Constant inertia matrix with its inverse computed once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaModel<T: Real> {
    m: Matrix3<T>,
    m_inv: Matrix3<T>,
}

impl<T: Real> InertiaModel<T> {
    pub fn new(m: Matrix3<T>) -> Result<Self> {
        check_spd(&m, "inertia")?;
        let m_inv = m.try_inverse().ok_or_else(|| Error::InvalidArgument("inertia is singular".into()))?;
        Ok(Self { m, m_inv })
    }

    pub fn from_diagonal(d: Vector3<T>) -> Result<Self> {
        Self::new(Matrix3::from_diagonal(&d))
    }

    #[inline]
    pub fn matrix(&self) -> Matrix3<T> {
        self.m
    }

    #[inline]
    pub fn inverse(&self) -> Matrix3<T> {
        self.m_inv
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceState<T: Real> {
    pub q_d: UnitQuat<T>,
    pub omega_d: Vector3<T>,
    pub omega_d_dot: Vector3<T>,
}

/// Source of the desired body rate `ω_d(t)` and its derivative.
pub trait ReferenceProvider<T: Real>: Send + Sync {
    fn omega_d(&self, t: T) -> Vector3<T>;
    fn omega_d_dot(&self, t: T) -> Vector3<T>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRate<T: Real>(pub Vector3<T>);

impl<T: Real> ReferenceProvider<T> for ConstantRate<T> {
    fn omega_d(&self, _t: T) -> Vector3<T> {
        self.0
    }

    fn omega_d_dot(&self, _t: T) -> Vector3<T> {
        Vector3::zeros()
    }
}

/// Piecewise-linear `ω_d(t)` through tabulated samples, held constant outside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedRate<T: Real> {
    times: Vec<T>,
    rates: Vec<Vector3<T>>,
}

impl<T: Real> TabulatedRate<T> {
    pub fn new(times: Vec<T>, rates: Vec<Vector3<T>>) -> Result<Self> {
        if times.is_empty() || times.len() != rates.len() {
            return Err(Error::InvalidArgument("rate table needs matching, non-empty columns".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("rate table times must be strictly increasing".into()));
        }
        if rates.iter().any(|r| r.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidArgument("rate table has non-finite entries".into()));
        }
        Ok(Self { times, rates })
    }

    pub fn max_norm(&self) -> T {
        self.rates.iter().map(|r| r.norm()).fold(T::zero(), |a, b| a.max(b))
    }

    fn segment(&self, t: T) -> Option<usize> {
        if t < self.times[0] || t >= self.times[self.times.len() - 1] {
            return None;
        }
        Some(self.times.partition_point(|&ti| ti <= t) - 1)
    }
}

impl<T: Real> ReferenceProvider<T> for TabulatedRate<T> {
    fn omega_d(&self, t: T) -> Vector3<T> {
        match self.segment(t) {
            Some(i) => {
                let s = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
                self.rates[i] + (self.rates[i + 1] - self.rates[i]) * s
            }
            None if t < self.times[0] => self.rates[0],
            None => self.rates[self.rates.len() - 1],
        }
    }

    fn omega_d_dot(&self, t: T) -> Vector3<T> {
        match self.segment(t) {
            Some(i) => (self.rates[i + 1] - self.rates[i]) / (self.times[i + 1] - self.times[i]),
            None => Vector3::zeros(),
        }
    }
}

/// `q̇ = ½ J(q) ω`, valid for any `q ∈ R⁴`.
pub fn kinematics_rate<T: Real>(q: &Vector4<T>, omega: &Vector3<T>) -> Vector4<T> {
    jmat(q) * omega * T::lit(0.5)
}

/// `ω̇ = M⁻¹ (S(M ω) ω + τ)`.
pub fn dynamics_rate<T: Real>(omega: &Vector3<T>, tau: &Vector3<T>, inertia: &InertiaModel<T>) -> Vector3<T> {
    inertia.m_inv * (skew(&(inertia.m * omega)) * omega + tau)
}

/// Plant, reference and observer states advanced together by [`step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState<T: Real> {
    pub t: T,
    pub body: BodyState<T>,
    pub q_d: UnitQuat<T>,
    pub observer: ObserverState<T>,
}

/// Zero-order-held inputs for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInputs<T: Real> {
    pub tau: Vector3<T>,
    pub omega_g: Vector3<T>,
    /// Current discrete state; used by the coupled observer through `z(h e)`.
    pub h: i8,
}

#[derive(Debug, Clone, Copy)]
struct Flat<T: Real> {
    q: Vector4<T>,
    omega: Vector3<T>,
    q_d: Vector4<T>,
    b_bar: Vector3<T>,
    q_f: Vector4<T>,
}

impl<T: Real> Add for Flat<T> {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            q: self.q + o.q,
            omega: self.omega + o.omega,
            q_d: self.q_d + o.q_d,
            b_bar: self.b_bar + o.b_bar,
            q_f: self.q_f + o.q_f,
        }
    }
}

impl<T: Real> Mul<T> for Flat<T> {
    type Output = Self;

    fn mul(self, s: T) -> Self {
        Self { q: self.q * s, omega: self.omega * s, q_d: self.q_d * s, b_bar: self.b_bar * s, q_f: self.q_f * s }
    }
}

fn rates<T: Real>(
    t: T,
    x: &Flat<T>,
    inputs: &StepInputs<T>,
    params: &LoopParams<T>,
    reference: &dyn ReferenceProvider<T>,
    variant: ObserverVariant,
) -> Result<Flat<T>> {
    let q_dot = kinematics_rate(&x.q, &x.omega);
    let omega_dot = dynamics_rate(&x.omega, &inputs.tau, &params.inertia);
    let q_d_dot = kinematics_rate(&x.q_d, &reference.omega_d(t));
    let obs = ObserverState { b_bar: x.b_bar, q_f: x.q_f };
    let gains = &params.observer;
    let (b_bar, q_f) = match variant {
        ObserverVariant::Ideal => {
            let omega_hat = inputs.omega_g - ideal_bias_estimate(&obs, &x.q, gains);
            ideal_observer_rates(&obs, &x.q, &omega_hat, gains)
        }
        ObserverVariant::Coupled => {
            let e = tracking_error(&UnitQuat::normalize(x.q)?, &UnitQuat::normalize(x.q_d)?);
            let (z, _) = error_coordinates(&e.signed(inputs.h), &params.log_opts)?;
            let mz = params.inertia.m * z;
            let omega_hat = inputs.omega_g - coupled_bias_estimate(&obs, &x.q, &mz, gains);
            coupled_observer_rates(&obs, &x.q, &omega_hat, &mz, gains)
        }
        ObserverVariant::ExactFilter => {
            let omega_hat = inputs.omega_g - ideal_bias_estimate(&obs, &x.q, gains);
            (exact_filter_rate(&x.q, &q_dot, &omega_hat, gains), q_dot)
        }
    };
    Ok(Flat { q: q_dot, omega: omega_dot, q_d: q_d_dot, b_bar, q_f })
}

/// One classical RK4 step of the coupled plant/reference/observer ODEs.
///
/// `τ` and `ω_g` are held over the step, `q` and `q_d` are renormalized afterwards, and the
/// hysteresis variable is left untouched.
pub fn step<T: Real>(
    state: &FullState<T>,
    inputs: &StepInputs<T>,
    params: &LoopParams<T>,
    reference: &dyn ReferenceProvider<T>,
    variant: ObserverVariant,
    dt: T,
) -> Result<FullState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let x0 = Flat {
        q: *state.body.q.as_vec4(),
        omega: state.body.omega,
        q_d: *state.q_d.as_vec4(),
        b_bar: state.observer.b_bar,
        q_f: state.observer.q_f,
    };
    let half = T::lit(0.5);
    let t = state.t;
    let f = |tt: T, x: &Flat<T>| rates(tt, x, inputs, params, reference, variant);
    let k1 = f(t, &x0)?;
    let k2 = f(t + dt * half, &(x0 + k1 * (dt * half)))?;
    let k3 = f(t + dt * half, &(x0 + k2 * (dt * half)))?;
    let k4 = f(t + dt, &(x0 + k3 * dt))?;
    let x1 = x0 + (k1 + k2 * T::lit(2.0) + k3 * T::lit(2.0) + k4) * (dt / T::lit(6.0));

    let q = UnitQuat::normalize(x1.q)?;
    let q_f = if variant == ObserverVariant::ExactFilter { *q.as_vec4() } else { x1.q_f };
    Ok(FullState {
        t: t + dt,
        body: BodyState { q, omega: x1.omega },
        q_d: UnitQuat::normalize(x1.q_d)?,
        observer: ObserverState { b_bar: x1.b_bar, q_f },
    })
}
