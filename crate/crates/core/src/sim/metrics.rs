//! Tracking, estimation and energy metrics over a [`TrajectoryLog`].

use serde::{Deserialize, Serialize};

use crate::attmath::rotation_of;
use crate::control::control_effort_series;
use crate::Vec3;

use super::TrajectoryLog;

/// Convergence bands used for entry times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    /// Pointing angle `2 arccos|e0|` [rad].
    pub pointing: f64,
    /// `‖ω̃‖` [rad/s].
    pub omega_tilde: f64,
    /// `‖b̂ - b‖` [rad/s].
    pub bias: f64,
}

impl Default for Bands {
    fn default() -> Self {
        Self { pointing: 0.05, omega_tilde: 0.01, bias: 0.005 }
    }
}

/// First time after which the series stays strictly below the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryTimes {
    pub pointing: Option<f64>,
    pub omega_tilde: Option<f64>,
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub duration: f64,
    pub samples: usize,
    pub switch_count: usize,
    pub switch_times: Vec<f64>,
    pub final_effort: f64,
    pub final_pointing_angle: f64,
    pub final_omega_tilde: f64,
    pub final_bias_error: f64,
    pub final_omega_tilde_rms: f64,
    pub final_bias_error_rms: f64,
    /// `∫‖ω̃‖ dt` [rad].
    pub accumulated_rotation: f64,
    pub max_filter_gap: f64,
    /// Least-squares slope of `ln‖z‖` over the second half of the run.
    pub z_log_slope: Option<f64>,
    pub bands: Bands,
    pub entry: EntryTimes,
}

/// `2 arccos|e0|`, evaluated as `2 atan2(‖ev‖, |e0|)`.
pub fn pointing_angle(e: &[f64; 4]) -> f64 {
    let v = (e[1] * e[1] + e[2] * e[2] + e[3] * e[3]).sqrt();
    2.0 * v.atan2(e[0].abs())
}

/// Running `√(1/t ∫₀ᵗ v² dt)` by the trapezoidal rule; the first sample is `|v₀|`.
pub fn rms_series(values: &[f64], dt: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(values.len());
    for (k, v) in values.iter().enumerate() {
        if k == 0 {
            out.push(v.abs());
            continue;
        }
        acc += 0.5 * (values[k - 1] * values[k - 1] + v * v) * dt;
        out.push((acc / (k as f64 * dt)).sqrt());
    }
    out
}

/// Trapezoidal `∫ v dt`.
pub fn integrate(values: &[f64], dt: f64) -> f64 {
    values.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum()
}

/// Time after which `values` stays below `threshold` until the end, if it ever does.
pub fn entry_time(t: &[f64], values: &[f64], threshold: f64) -> Option<f64> {
    match values.iter().rposition(|v| !(*v < threshold)) {
        None => t.first().copied(),
        Some(i) if i + 1 < values.len() => Some(t[i + 1]),
        Some(_) => None,
    }
}

/// Least-squares slope of `ln v` against `t` (non-positive samples are skipped).
pub fn log_slope(t: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t.iter().zip(values).filter(|(_, v)| **v > 0.0).map(|(t, v)| (*t, v.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `ω̃ = ω - Rᵀ(e) ω_d`.
pub fn omega_tilde(row: &super::LogRow) -> Vec3 {
    row.omega - rotation_of(&row.e).transpose() * row.omega_d
}

pub(crate) fn fill_derived(log: &mut TrajectoryLog) {
    let dt = log.sample_dt;
    let wt: Vec<f64> = log.rows.iter().map(|r| omega_tilde(r).norm()).collect();
    let be: Vec<f64> = log.rows.iter().map(|r| (r.b_hat - r.b).norm()).collect();
    let taus: Vec<Vec3> = log.rows.iter().map(|r| r.tau).collect();
    let effort = control_effort_series(&taus, dt);
    let wt_rms = rms_series(&wt, dt);
    let be_rms = rms_series(&be, dt);
    for (k, row) in log.rows.iter_mut().enumerate() {
        row.derived = super::Derived {
            pointing_angle: pointing_angle(&row.e.to_array()),
            omega_tilde_norm: wt[k],
            bias_error_norm: be[k],
            effort: effort[k],
            omega_tilde_rms: wt_rms[k],
            bias_error_rms: be_rms[k],
        };
    }
}

pub fn compute_metrics(log: &TrajectoryLog, bands: &Bands) -> MetricSummary {
    let rows = &log.rows;
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let pick = |f: fn(&super::Derived) -> f64| rows.iter().map(|r| f(&r.derived)).collect::<Vec<_>>();
    let pa = pick(|d| d.pointing_angle);
    let wt = pick(|d| d.omega_tilde_norm);
    let be = pick(|d| d.bias_error_norm);
    let last = rows.last().map(|r| r.derived).unwrap_or_default();

    let half = rows.len() / 2;
    let zn: Vec<f64> = rows.iter().map(|r| r.z.norm()).collect();

    MetricSummary {
        name: log.name.clone(),
        duration: t.last().copied().unwrap_or(0.0),
        samples: rows.len(),
        switch_count: log.switches.len(),
        switch_times: log.switches.iter().map(|s| s.t).collect(),
        final_effort: last.effort,
        final_pointing_angle: last.pointing_angle,
        final_omega_tilde: last.omega_tilde_norm,
        final_bias_error: last.bias_error_norm,
        final_omega_tilde_rms: last.omega_tilde_rms,
        final_bias_error_rms: last.bias_error_rms,
        accumulated_rotation: integrate(&wt, log.sample_dt),
        max_filter_gap: rows.iter().map(|r| (r.q - r.q_f).norm()).fold(0.0, f64::max),
        z_log_slope: log_slope(&t[half..], &zn[half..]),
        bands: *bands,
        entry: EntryTimes {
            pointing: entry_time(&t, &pa, bands.pointing),
            omega_tilde: entry_time(&t, &wt, bands.omega_tilde),
            bias: entry_time(&t, &be, bands.bias),
        },
    }
}
