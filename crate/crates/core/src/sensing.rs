//! Gyro measurement synthesis: `ω_g = ω + b + r_g`, `ḃ = r_b`.
//!
//! Noise terms are a uniformly scaled random unit direction, `r = m ν/‖ν‖`, with
//! `ν ~ N(0, 0.5 I)` and `m ~ U[0, m_max]` redrawn at every call. The generator is
//! ChaCha8 seeded from a `u64`, so a seed fixes the whole stream.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-axis variance of `ν` before normalization.
pub const DIRECTION_VARIANCE: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct GyroModel<T: Real> {
    b: Vector3<T>,
    m1_max: T,
    m2_max: T,
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl<T: Real> GyroModel<T> {
    pub fn new(bias0: Vector3<T>, m1_max: T, m2_max: T, seed: u64) -> Result<Self> {
        if !(m1_max >= T::zero()) || !(m2_max >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "noise caps must be non-negative, got m1_max = {m1_max}, m2_max = {m2_max}"
            )));
        }
        if bias0.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("bias must be finite".into()));
        }
        Ok(Self {
            b: bias0,
            m1_max,
            m2_max,
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, DIRECTION_VARIANCE.sqrt()).expect("valid normal"),
        })
    }

    /// Current true bias.
    pub fn bias(&self) -> Vector3<T> {
        self.b
    }

    /// Returns `ω + b + r_g` and then advances `b ← b + r_b dt` (explicit Euler).
    pub fn measure(&mut self, omega: &Vector3<T>, dt: T) -> Vector3<T> {
        let r_g = self.draw(self.m1_max);
        let r_b = self.draw(self.m2_max);
        let out = omega + self.b + r_g;
        self.b += r_b * dt;
        out
    }

    /// `m ν/‖ν‖`; nothing is drawn when the cap is zero so the noiseless model stays exact.
    fn draw(&mut self, cap: T) -> Vector3<T> {
        if cap == T::zero() {
            return Vector3::zeros();
        }
        let m: f64 = self.rng.random::<f64>() * cap.to_f64_lossy();
        let dir = loop {
            let nu = Vector3::new(
                self.normal.sample(&mut self.rng),
                self.normal.sample(&mut self.rng),
                self.normal.sample(&mut self.rng),
            );
            let n = nu.norm();
            if n > 1e-300 {
                break nu / n;
            }
        };
        (dir * m).map(T::lit)
    }
}
