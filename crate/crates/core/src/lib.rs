//! Attitude tracking for a rigid spacecraft with biased gyro measurements.
//!
//! The library covers the whole loop:
//!
//! * [`attmath`]: unit quaternions, the `J(q)` matrix, the quaternion logarithm and `G(z)`.
//! * [`plant`]: rigid-body kinematics/dynamics, reference trajectories and the RK4 stepper.
//! * [`sensing`]: gyro measurement synthesis with seeded noise and bias random walk.
//! * [`estimation`]: the filtered gyro-bias observer (stand-alone and controller-coupled).
//! * [`control`]: the logarithm-based tracking law, the hysteresis automaton and the switched law.
//! * [`contraction`]: Jacobian assembly and numerical contraction certificates along logs.
//! * [`sim`]: scenario configuration, the run loop, metrics and CSV output.
//!
//! All math modules are generic over [`Real`] (`f32` or `f64`); the aliases below fix the
//! scalar to `f64`, which is what the simulator uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attmath;
pub mod contraction;
pub mod control;
pub mod error;
pub mod estimation;
pub mod plant;
pub mod scalar;
pub mod sensing;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec4 = nalgebra::Vector4<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Mat4x3 = nalgebra::Matrix4x3<f64>;

pub type UnitQuaternion = attmath::UnitQuat<f64>;
pub type BodyState = plant::BodyState<f64>;
pub type InertiaModel = plant::InertiaModel<f64>;
pub type ReferenceState = plant::ReferenceState<f64>;
pub type ObserverState = estimation::ObserverState<f64>;
pub type ObserverGains = estimation::ObserverGains<f64>;
pub type ControllerGains = control::ControllerGains<f64>;
pub type HysteresisState = control::HysteresisState<f64>;
pub type ControlOutput = control::ControlOutput<f64>;
pub type JacobianReport = contraction::JacobianReport;

pub use sim::{ScenarioConfig, TrajectoryLog};
