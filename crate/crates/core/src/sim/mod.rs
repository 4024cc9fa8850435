//! Scenario configuration, run loop, metrics and file output.

mod config;
pub mod io;
pub mod metrics;
mod run;

pub use config::{
    GainsConfig, HysteresisConfig, InitialH, MatrixSpec, NumericsConfig, ObserverKind, OutputConfig, PlantConfig,
    ReferenceConfig, Scenario, ScenarioConfig, SensorConfig, MAX_LOG_INTERVAL,
};
pub use metrics::{compute_metrics, Bands, MetricSummary};
pub use run::run_scenario;

use serde::{Deserialize, Serialize};

use crate::attmath::UnitQuat;
use crate::contraction::{LoopSample, Vec9};
use crate::{Vec3, Vec4};

/// One logged instant. Derived columns are filled in after the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: Vec4,
    pub q_d: Vec4,
    pub q_f: Vec4,
    pub e: UnitQuat<f64>,
    pub h: i8,
    pub z: Vec3,
    pub omega: Vec3,
    pub omega_g: Vec3,
    pub omega_r: Vec3,
    pub omega_d: Vec3,
    pub b: Vec3,
    pub b_hat: Vec3,
    pub tau: Vec3,
    pub derived: Derived,
}

/// Per-sample metrics computed from the raw columns.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derived {
    /// `2 arccos|e0|` [rad].
    pub pointing_angle: f64,
    /// `‖ω - Rᵀ(e) ω_d‖` [rad/s].
    pub omega_tilde_norm: f64,
    /// `‖b̂ - b‖` [rad/s].
    pub bias_error_norm: f64,
    /// `√∫τᵀτ dt`.
    pub effort: f64,
    pub omega_tilde_rms: f64,
    pub bias_error_rms: f64,
}

impl LogRow {
    pub fn loop_sample(&self) -> LoopSample<f64> {
        LoopSample {
            t: self.t,
            q: self.q,
            q_f: self.q_f,
            e: self.e,
            h: self.h,
            z: self.z,
            omega: self.omega,
            omega_r: self.omega_r,
            omega_d: self.omega_d,
            b: self.b,
            b_hat: self.b_hat,
        }
    }

    /// Closed-loop virtual state `(b̂, ω_r, z)`.
    pub fn virtual_state(&self) -> Vec9<f64> {
        let mut xi = Vec9::zeros();
        xi.fixed_rows_mut::<3>(0).copy_from(&self.b_hat);
        xi.fixed_rows_mut::<3>(3).copy_from(&self.omega_r);
        xi.fixed_rows_mut::<3>(6).copy_from(&self.z);
        xi
    }
}

/// A jump of the hysteresis variable at an integrator step boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub step: usize,
    pub t: f64,
    pub e0: f64,
    pub h_before: i8,
    pub h_after: i8,
}

/// Uniformly sampled run output.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub name: String,
    /// Spacing between rows [s].
    pub sample_dt: f64,
    pub rows: Vec<LogRow>,
    pub switches: Vec<SwitchEvent>,
}
