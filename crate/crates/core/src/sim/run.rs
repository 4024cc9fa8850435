use crate::control::{hysteresis_update, switched_control, tracking_error};
use crate::error::{Error, Result};
use crate::estimation::ObserverState;
use crate::plant::{step, BodyState, FullState, ReferenceState, StepInputs};
use crate::sensing::GyroModel;
use crate::Vec3;

use super::metrics::fill_derived;
use super::{Derived, LogRow, ScenarioConfig, SwitchEvent, TrajectoryLog};

/// Runs one scenario to completion.
///
/// Per step: measure, apply the hysteresis jump rule, evaluate the switched controller,
/// log, then advance plant/reference/observer with RK4 under zero-order hold.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    let sc = cfg.build()?;
    let params = &sc.params;
    let m = params.inertia.matrix();
    let dt = cfg.dt;

    let mut gyro = GyroModel::new(
        Vec3::from(cfg.sensor.bias0),
        cfg.sensor.m1_max,
        cfg.sensor.m2_max,
        cfg.seed,
    )?;
    let e_init = tracking_error(&sc.q0, &sc.qd0);
    let mz0 = match sc.variant {
        crate::estimation::ObserverVariant::Coupled => {
            let (z, _) = crate::control::error_coordinates(&e_init.signed(sc.hysteresis.h()), &params.log_opts)
                .map_err(|err| Error::SimulationAbort {
                    step: 0,
                    t: 0.0,
                    e0: e_init.scalar(),
                    h: sc.hysteresis.h(),
                    detail: err.to_string(),
                })?;
            m * z
        }
        _ => Vec3::zeros(),
    };
    let mut state = FullState {
        t: 0.0,
        body: BodyState { q: sc.q0, omega: sc.omega0 },
        q_d: sc.qd0,
        observer: ObserverState::initial(&sc.q0, sc.bias_hat0, mz0, &params.observer),
    };
    let mut hs = sc.hysteresis;
    let mut rows = Vec::with_capacity(sc.steps / sc.stride + 2);
    let mut switches = Vec::new();

    for k in 0..=sc.steps {
        let t = k as f64 * dt;
        state.t = t;
        let reference = ReferenceState {
            q_d: state.q_d,
            omega_d: sc.reference.omega_d(t),
            omega_d_dot: sc.reference.omega_d_dot(t),
        };
        let e0 = tracking_error(&state.body.q, &state.q_d).scalar();
        let before = hs;
        hs = hysteresis_update(hs, e0);
        if hs.h() != before.h() {
            switches.push(SwitchEvent { step: k, t, e0, h_before: before.h(), h_after: hs.h() });
        }

        let abort = |err: Error| Error::SimulationAbort { step: k, t, e0, h: hs.h(), detail: err.to_string() };
        let b = gyro.bias();
        let omega_g = gyro.measure(&state.body.omega, dt);
        let out = switched_control(&state.body.q, &omega_g, &reference, &state.observer, &hs, params).map_err(abort)?;

        if k % sc.stride == 0 || k == sc.steps {
            rows.push(LogRow {
                t,
                q: *state.body.q.as_vec4(),
                q_d: *state.q_d.as_vec4(),
                q_f: state.observer.q_f,
                e: out.e,
                h: hs.h(),
                z: out.z,
                omega: state.body.omega,
                omega_g,
                omega_r: out.omega_r,
                omega_d: reference.omega_d,
                b,
                b_hat: out.b_hat,
                tau: out.tau,
                derived: Derived::default(),
            });
        }
        if k == sc.steps {
            break;
        }
        let inputs = StepInputs { tau: out.tau, omega_g, h: hs.h() };
        state = step(&state, &inputs, params, sc.reference.as_ref(), sc.variant, dt).map_err(abort)?;
    }

    let mut log = TrajectoryLog { name: cfg.name.clone(), sample_dt: sc.stride as f64 * dt, rows, switches };
    fill_derived(&mut log);
    Ok(log)
}
