//! CSV and JSON output.
//!
//! Trajectory CSV columns, in order:
//!
//! ```text
//! t,
//! q0,q1,q2,q3, qd0,qd1,qd2,qd3, qf0,qf1,qf2,qf3, e0,e1,e2,e3, h,
//! z_x,z_y,z_z, omega_x,omega_y,omega_z, omega_g_x,omega_g_y,omega_g_z,
//! omega_r_x,omega_r_y,omega_r_z, omega_d_x,omega_d_y,omega_d_z,
//! b_x,b_y,b_z, b_hat_x,b_hat_y,b_hat_z, tau_x,tau_y,tau_z,
//! pointing_angle, omega_tilde_norm, bias_error_norm, effort, omega_tilde_rms, bias_error_rms
//! ```
//!
//! Floats are written as `{:.16e}` (17 significant digits), so a log read back
//! reproduces every value exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::attmath::UnitQuat;
use crate::contraction::JacobianReport;
use crate::error::{Error, Result};
use crate::{Vec3, Vec4};

use super::{Derived, LogRow, MetricSummary, SwitchEvent, TrajectoryLog};

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "ATTITRACK_OUT_DIR";

pub fn header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for (p, n) in [("q", 4), ("qd", 4), ("qf", 4), ("e", 4)] {
        h.extend((0..n).map(|i| format!("{p}{i}")));
    }
    h.push("h".into());
    for p in ["z", "omega", "omega_g", "omega_r", "omega_d", "b", "b_hat", "tau"] {
        h.extend(["x", "y", "z"].iter().map(|a| format!("{p}_{a}")));
    }
    h.extend(
        ["pointing_angle", "omega_tilde_norm", "bias_error_norm", "effort", "omega_tilde_rms", "bias_error_rms"]
            .map(String::from),
    );
    h
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn row_fields(r: &LogRow) -> Vec<String> {
    let mut f = vec![fmt(r.t)];
    for v in [&r.q, &r.q_d, &r.q_f, r.e.as_vec4()] {
        f.extend(v.iter().map(|x| fmt(*x)));
    }
    f.push(r.h.to_string());
    for v in [&r.z, &r.omega, &r.omega_g, &r.omega_r, &r.omega_d, &r.b, &r.b_hat, &r.tau] {
        f.extend(v.iter().map(|x| fmt(*x)));
    }
    let d = &r.derived;
    f.extend(
        [d.pointing_angle, d.omega_tilde_norm, d.bias_error_norm, d.effort, d.omega_tilde_rms, d.bias_error_rms]
            .map(fmt),
    );
    f
}

pub fn write_log_csv<W: Write>(log: &TrajectoryLog, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header())?;
    for r in &log.rows {
        wr.write_record(row_fields(r))?;
    }
    wr.flush()?;
    Ok(())
}

struct Cursor<'a> {
    rec: &'a csv::StringRecord,
    i: usize,
    line: usize,
}

impl Cursor<'_> {
    fn next(&mut self) -> Result<&str> {
        let s = self
            .rec
            .get(self.i)
            .ok_or_else(|| Error::Config(format!("line {}: missing column {}", self.line, self.i)))?;
        self.i += 1;
        Ok(s)
    }

    fn f(&mut self) -> Result<f64> {
        let (line, col) = (self.line, self.i);
        let s = self.next()?;
        s.parse().map_err(|e| Error::Config(format!("line {line}, column {col}: {e}")))
    }

    fn v3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f()?, self.f()?, self.f()?))
    }

    fn v4(&mut self) -> Result<Vec4> {
        Ok(Vec4::new(self.f()?, self.f()?, self.f()?, self.f()?))
    }
}

/// Reads a trajectory CSV. Switch events are not part of the file; `name` and `sample_dt`
/// are supplied by the caller.
pub fn read_log_csv<R: Read>(r: R, name: &str, sample_dt: f64) -> Result<TrajectoryLog> {
    let mut rd = csv::Reader::from_reader(r);
    let expected = header();
    let got: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if got != expected {
        return Err(Error::Config("unexpected trajectory CSV header".into()));
    }
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != expected.len() {
            return Err(Error::Config(format!("line {}: expected {} columns", k + 2, expected.len())));
        }
        let mut c = Cursor { rec: &rec, i: 0, line: k + 2 };
        let t = c.f()?;
        let (q, q_d, q_f) = (c.v4()?, c.v4()?, c.v4()?);
        let e = UnitQuat::from_vec4_unscaled(c.v4()?)?;
        let h: i8 = c.next()?.parse().map_err(|e| Error::Config(format!("line {}: h: {e}", k + 2)))?;
        rows.push(LogRow {
            t,
            q,
            q_d,
            q_f,
            e,
            h,
            z: c.v3()?,
            omega: c.v3()?,
            omega_g: c.v3()?,
            omega_r: c.v3()?,
            omega_d: c.v3()?,
            b: c.v3()?,
            b_hat: c.v3()?,
            tau: c.v3()?,
            derived: Derived {
                pointing_angle: c.f()?,
                omega_tilde_norm: c.f()?,
                bias_error_norm: c.f()?,
                effort: c.f()?,
                omega_tilde_rms: c.f()?,
                bias_error_rms: c.f()?,
            },
        });
    }
    Ok(TrajectoryLog { name: name.to_string(), sample_dt, rows, switches: Vec::new() })
}

pub fn write_switches_csv<W: Write>(switches: &[SwitchEvent], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["step", "t", "e0", "h_before", "h_after"])?;
    for s in switches {
        wr.write_record([s.step.to_string(), fmt(s.t), fmt(s.e0), s.h_before.to_string(), s.h_after.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// One row per certified sample; `fd_mismatch` is empty when not checked.
pub fn write_certification_csv<W: Write>(reports: &[JacobianReport], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "t",
        "h",
        "lambda_max_sym_jo",
        "jo_bound",
        "lambda_max_sym_jc",
        "norm_f",
        "fd_mismatch",
        "block_zero_residual",
        "antisymmetry_residual",
        "filter_gap",
        "passed",
    ])?;
    for r in reports {
        wr.write_record([
            fmt(r.t),
            r.h.to_string(),
            fmt(r.lambda_max_sym_jo),
            fmt(r.jo_bound),
            fmt(r.lambda_max_sym_jc),
            fmt(r.norm_f),
            r.fd_mismatch.map(fmt).unwrap_or_default(),
            fmt(r.block_zero_residual),
            fmt(r.antisymmetry_residual),
            fmt(r.filter_gap),
            r.passed.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_metrics_json<W: Write>(m: &MetricSummary, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, m)?;
    Ok(())
}

/// `ATTITRACK_OUT_DIR` if set, else `configured`, else `fallback`.
pub fn resolve_out_dir(configured: Option<&str>, fallback: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.map(PathBuf::from).unwrap_or_else(|| fallback.to_path_buf()),
    }
}

/// Paths written by [`write_run_outputs`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub trajectory: PathBuf,
    pub switches: PathBuf,
    pub metrics: PathBuf,
}

/// Writes `<prefix>.csv`, `<prefix>_switches.csv` and `<prefix>_metrics.json` into `dir`.
pub fn write_run_outputs(dir: &Path, prefix: &str, log: &TrajectoryLog, metrics: &MetricSummary) -> Result<RunFiles> {
    std::fs::create_dir_all(dir)?;
    let files = RunFiles {
        trajectory: dir.join(format!("{prefix}.csv")),
        switches: dir.join(format!("{prefix}_switches.csv")),
        metrics: dir.join(format!("{prefix}_metrics.json")),
    };
    write_log_csv(log, File::create(&files.trajectory)?)?;
    write_switches_csv(&log.switches, File::create(&files.switches)?)?;
    write_metrics_json(metrics, File::create(&files.metrics)?)?;
    Ok(files)
}
