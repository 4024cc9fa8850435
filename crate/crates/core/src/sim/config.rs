//! Scenario configuration (TOML) and the built-in scenarios.
//!
//! Unknown keys are rejected everywhere so a misspelled gain cannot silently default.

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::attmath::{LogOptions, UnitQuat};
use crate::control::{tracking_error, ControllerGains, HysteresisState, LoopParams};
use crate::error::{Error, Result};
use crate::estimation::{ObserverGains, ObserverVariant};
use crate::plant::{ConstantRate, InertiaModel, ReferenceProvider, TabulatedRate};
use crate::Vec3;

/// Longest allowed spacing between logged samples.
pub const MAX_LOG_INTERVAL: f64 = 0.05;

/// A 3×3 matrix given as a scalar multiple of `I`, a diagonal, or full rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> Matrix3<f64> {
        match self {
            Self::Scalar(s) => Matrix3::identity() * *s,
            Self::Diagonal(d) => Matrix3::from_diagonal(&Vector3::from(*d)),
            Self::Full(rows) => Matrix3::from_fn(|r, c| rows[r][c]),
        }
    }
}

/// Initial switching variable: `"auto"` (= sgn(e0(0))), `1` or `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialH {
    Fixed(i64),
    Named(String),
}

impl Default for InitialH {
    fn default() -> Self {
        Self::Named("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    /// Inertia matrix [kg·m²].
    pub inertia: MatrixSpec,
    pub q0: [f64; 4],
    /// Initial body rate [rad/s].
    pub omega0: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub qd0: [f64; 4],
    /// Constant desired rate [rad/s]; exclusive with `table`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_d: Option<[f64; 3]>,
    /// Rows `[t, wx, wy, wz]`, linearly interpolated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 4]>>,
    #[serde(default = "default_omega_cap")]
    pub omega_d_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Initial true gyro bias [rad/s].
    pub bias0: [f64; 3],
    #[serde(default)]
    pub m1_max: f64,
    #[serde(default)]
    pub m2_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    pub k_c: MatrixSpec,
    pub lambda_c: f64,
    pub k_o: MatrixSpec,
    pub gamma: f64,
    /// Initial bias estimate [rad/s].
    #[serde(default)]
    pub bias_hat0: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HysteresisConfig {
    pub delta: f64,
    #[serde(default)]
    pub h0: InitialH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObserverKind {
    Ideal,
    #[default]
    Coupled,
    ExactFilter,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default = "default_series_threshold")]
    pub series_threshold: f64,
    #[serde(default = "default_eps_z")]
    pub eps_z: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self { series_threshold: default_series_threshold(), eps_z: default_eps_z() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Simulated time [s].
    pub duration: f64,
    /// Integrator step [s].
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Spacing of logged samples [s]; at most 0.05.
    #[serde(default = "default_log_interval")]
    pub log_interval: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub certify: bool,
    #[serde(default)]
    pub observer: ObserverKind,
    pub plant: PlantConfig,
    pub reference: ReferenceConfig,
    pub sensor: SensorConfig,
    pub gains: GainsConfig,
    pub hysteresis: HysteresisConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
}

fn default_name() -> String {
    "custom".into()
}
fn default_dt() -> f64 {
    1e-3
}
fn default_log_interval() -> f64 {
    0.01
}
fn default_omega_cap() -> f64 {
    10.0
}
fn default_series_threshold() -> f64 {
    1e-4
}
fn default_eps_z() -> f64 {
    1e-6
}

/// Validated runtime objects built from a [`ScenarioConfig`].
pub struct Scenario {
    pub params: LoopParams<f64>,
    pub reference: Box<dyn ReferenceProvider<f64>>,
    pub variant: ObserverVariant,
    pub q0: UnitQuat<f64>,
    pub qd0: UnitQuat<f64>,
    pub omega0: Vec3,
    pub bias_hat0: Vec3,
    pub hysteresis: HysteresisState<f64>,
    pub steps: usize,
    pub stride: usize,
}

fn quat(v: [f64; 4], what: &str) -> Result<UnitQuat<f64>> {
    UnitQuat::from_vec4(Vector4::from(v)).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn finite3(v: [f64; 3], what: &str) -> Result<Vec3> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(Vector3::from(v))
    } else {
        Err(Error::Config(format!("{what} must be finite")))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Returns a copy with one dotted key (e.g. `gains.lambda_c`) replaced by a TOML value.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(&self.to_toml_string()?).map_err(|e| Error::Config(e.to_string()))?;
        let parsed: toml::Value = {
            let wrapped: toml::Table = toml::from_str(&format!("v = {value}"))
                .or_else(|_| toml::from_str(&format!("v = \"{value}\"")))
                .map_err(|e: toml::de::Error| Error::Config(format!("bad value {value:?}: {e}")))?;
            wrapped["v"].clone()
        };
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config("empty key".into()))?;
        let mut table = &mut doc;
        for p in parts {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{p} in {key} is not a table")))?;
        }
        table.insert(last.to_string(), parsed);
        let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    /// Checks every invariant and builds the runtime scenario.
    pub fn build(&self) -> Result<Scenario> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        let steps_f = self.duration / self.dt;
        let steps = steps_f.round();
        if (steps - steps_f).abs() > 1e-6 * steps.max(1.0) {
            return Err(Error::Config(format!(
                "duration {} is not an integer multiple of dt {}",
                self.duration, self.dt
            )));
        }
        if !(self.log_interval > 0.0 && self.log_interval <= MAX_LOG_INTERVAL + 1e-12) {
            return Err(Error::Config(format!("log_interval must lie in (0, {MAX_LOG_INTERVAL}]")));
        }
        let stride = ((self.log_interval / self.dt).round() as usize).max(1);
        if stride as f64 * self.dt > MAX_LOG_INTERVAL + 1e-12 {
            return Err(Error::Config("log spacing exceeds 0.05 s".into()));
        }
        if !(steps as usize).is_multiple_of(stride) {
            return Err(Error::Config("duration must be a whole number of log intervals".into()));
        }

        let inertia = InertiaModel::new(self.plant.inertia.to_matrix())
            .map_err(|e| Error::Config(format!("plant.inertia: {e}")))?;
        let controller = ControllerGains::new(self.gains.k_c.to_matrix(), self.gains.lambda_c)
            .map_err(|e| Error::Config(format!("gains: {e}")))?;
        let variant = match self.observer {
            ObserverKind::Ideal => ObserverVariant::Ideal,
            ObserverKind::Coupled => ObserverVariant::Coupled,
            ObserverKind::ExactFilter => ObserverVariant::ExactFilter,
        };
        let observer_lambda = if variant == ObserverVariant::Coupled { self.gains.lambda_c } else { 0.0 };
        let observer = ObserverGains::new(self.gains.k_o.to_matrix(), self.gains.gamma, observer_lambda)
            .map_err(|e| Error::Config(format!("gains: {e}")))?;
        let n = &self.numerics;
        if !(n.series_threshold > 0.0 && n.series_threshold < 0.1 && n.eps_z > 0.0 && n.eps_z < 0.1) {
            return Err(Error::Config("numerics thresholds must lie in (0, 0.1)".into()));
        }
        let log_opts = LogOptions { series_threshold: n.series_threshold, eps_z: n.eps_z };

        let reference: Box<dyn ReferenceProvider<f64>> = match (&self.reference.omega_d, &self.reference.table) {
            (Some(w), None) => {
                let w = finite3(*w, "reference.omega_d")?;
                if w.norm() > self.reference.omega_d_cap {
                    return Err(Error::Config("reference.omega_d exceeds omega_d_cap".into()));
                }
                Box::new(ConstantRate(w))
            }
            (None, Some(rows)) => {
                let tab = TabulatedRate::new(
                    rows.iter().map(|r| r[0]).collect(),
                    rows.iter().map(|r| Vector3::new(r[1], r[2], r[3])).collect(),
                )
                .map_err(|e| Error::Config(format!("reference.table: {e}")))?;
                if tab.max_norm() > self.reference.omega_d_cap {
                    return Err(Error::Config("reference.table exceeds omega_d_cap".into()));
                }
                Box::new(tab)
            }
            _ => return Err(Error::Config("reference needs exactly one of omega_d or table".into())),
        };

        let q0 = quat(self.plant.q0, "plant.q0")?;
        let qd0 = quat(self.reference.qd0, "reference.qd0")?;
        let e0 = tracking_error(&q0, &qd0).scalar();
        let h0 = match &self.hysteresis.h0 {
            InitialH::Fixed(h @ (1 | -1)) => *h as i8,
            InitialH::Named(s) if s == "auto" => crate::attmath::sgn_hat(e0),
            InitialH::Named(s) if s == "+1" || s == "1" => 1,
            InitialH::Named(s) if s == "-1" => -1,
            other => return Err(Error::Config(format!("hysteresis.h0 must be auto, 1 or -1, got {other:?}"))),
        };
        let hysteresis = HysteresisState::new(h0, self.hysteresis.delta)
            .map_err(|e| Error::Config(format!("hysteresis: {e}")))?;
        if !(self.sensor.m1_max >= 0.0 && self.sensor.m2_max >= 0.0) {
            return Err(Error::Config("sensor noise caps must be non-negative".into()));
        }

        Ok(Scenario {
            params: LoopParams { inertia, controller, observer, log_opts },
            reference,
            variant,
            q0,
            qd0,
            omega0: finite3(self.plant.omega0, "plant.omega0")?,
            bias_hat0: finite3(self.gains.bias_hat0, "gains.bias_hat0")?,
            hysteresis,
            steps: steps as usize,
            stride,
        })
    }

    /// Built-in scenarios: 1 continuous (`δ = 1`), 2 hysteretic (`δ = 0.3`),
    /// 3 hysteretic with gyro noise and a random-walk bias.
    pub fn builtin(id: u32) -> Result<Self> {
        let u = Vector3::new(1.0, 2.0, 3.0).normalize();
        let s = (1.0f64 - 0.2 * 0.2).sqrt();
        let base = Self {
            name: format!("scenario{id}"),
            duration: 120.0,
            dt: default_dt(),
            log_interval: default_log_interval(),
            seed: 1,
            certify: false,
            observer: ObserverKind::Coupled,
            plant: PlantConfig {
                inertia: MatrixSpec::Diagonal((u * 10.0).into()),
                q0: [-0.2, s * u.x, s * u.y, s * u.z],
                omega0: (u * 0.5).into(),
            },
            reference: ReferenceConfig {
                qd0: [1.0, 0.0, 0.0, 0.0],
                omega_d: Some([0.0, 0.11, 0.0]),
                table: None,
                omega_d_cap: default_omega_cap(),
            },
            sensor: SensorConfig { bias0: [0.05, -0.05, 0.033], m1_max: 0.0, m2_max: 0.0 },
            gains: GainsConfig {
                k_c: MatrixSpec::Scalar(1.0),
                lambda_c: 0.01,
                k_o: MatrixSpec::Scalar(1.0),
                gamma: 0.5,
                bias_hat0: [0.0; 3],
            },
            hysteresis: HysteresisConfig { delta: 1.0, h0: InitialH::Fixed(1) },
            output: OutputConfig::default(),
            numerics: NumericsConfig::default(),
        };
        match id {
            1 => Ok(base),
            2 => Ok(Self { hysteresis: HysteresisConfig { delta: 0.3, h0: InitialH::Fixed(1) }, ..base }),
            3 => Ok(Self {
                duration: 300.0,
                seed: 2024,
                hysteresis: HysteresisConfig { delta: 0.3, h0: InitialH::Fixed(1) },
                sensor: SensorConfig { m1_max: 0.01, m2_max: 0.03, ..base.sensor },
                ..base
            }),
            other => Err(Error::Config(format!("no built-in scenario {other}; expected 1, 2 or 3"))),
        }
    }
}
