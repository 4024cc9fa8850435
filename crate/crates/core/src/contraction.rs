//! Numerical contraction certificates for the observer/controller closed loop.
//!
//! The closed loop is written on the virtual state `ξ = (b̂, ω_r, z) ∈ R⁹` with
//! differential dynamics `M₂ δξ̇ = J_oc δξ`, `M₂ = diag{I, M, I}`. Removing the blocks that
//! cancel in `δξᵀ J_oc δξ` leaves the block lower-triangular
//!
//! ```text
//! J_s = [ J_o   0    0     ]
//!       [ F    -K_c  0     ]
//!       [ 0     0   -λ_c I ]
//! ```
//!
//! so contraction follows from `J_o < 0`, `J_c = diag(-K_c, -λ_c I) < 0` and a bounded `F`.
//! The switched loop has one such field per `h`, all sharing the same metric.

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen, Vector3, Vector4};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attmath::{gmat_with, jmat, rotation_of, skew, UnitQuat};
use crate::control::{skew_part, LoopParams};
use crate::error::Result;
use crate::estimation::coupled_error_rate;
use crate::plant::InertiaModel;
use crate::scalar::Real;
use crate::sim::TrajectoryLog;

pub type Mat9<T> = SMatrix<T, 9, 9>;
pub type Vec9<T> = SVector<T, 9>;

/// `J_o = -½ K_o Jᵀ(q_f) J(q)`.
pub fn observer_jacobian<T: Real>(q: &Vector4<T>, q_f: &Vector4<T>, k_o: &Matrix3<T>) -> Matrix3<T> {
    -(k_o * jmat(q_f).transpose() * jmat(q)) * T::lit(0.5)
}

/// `F = S(ω_r) M - K_c + M S(Rᵀ(e) ω_d)`. Pass `h e` or `e`; `R` is sign invariant.
pub fn coupling_matrix<T: Real>(
    omega_r: &Vector3<T>,
    omega_d: &Vector3<T>,
    e: &UnitQuat<T>,
    k_c: &Matrix3<T>,
    inertia: &InertiaModel<T>,
) -> Matrix3<T> {
    let m = inertia.matrix();
    skew(omega_r) * m - k_c + m * skew(&(rotation_of(e).transpose() * omega_d))
}

/// Contraction metric `diag{I, M, I}`, shared by both switching modes.
pub fn metric<T: Real>(inertia: &InertiaModel<T>) -> Mat9<T> {
    let mut out = Mat9::identity();
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&inertia.matrix());
    out
}

/// Closed-loop signals at one instant, enough to rebuild every Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSample<T: Real> {
    pub t: T,
    pub q: Vector4<T>,
    pub q_f: Vector4<T>,
    pub e: UnitQuat<T>,
    pub h: i8,
    /// `z(h e)`.
    pub z: Vector3<T>,
    pub omega: Vector3<T>,
    pub omega_r: Vector3<T>,
    pub omega_d: Vector3<T>,
    pub b: Vector3<T>,
    pub b_hat: Vector3<T>,
}

/// Sample-dependent matrices shared by the field and its Jacobians.
struct Blocks<T: Real> {
    m: Matrix3<T>,
    g: Matrix3<T>,
    p: Matrix3<T>,
    p_a: Matrix3<T>,
    f: Matrix3<T>,
    j_o: Matrix3<T>,
}

fn blocks<T: Real>(s: &LoopSample<T>, params: &LoopParams<T>) -> Result<Blocks<T>> {
    let m = params.inertia.matrix();
    let g = gmat_with(&s.z, &params.log_opts)?;
    let p = m * g;
    Ok(Blocks {
        m,
        g,
        p,
        p_a: skew_part(&p),
        f: coupling_matrix(&s.omega_r, &s.omega_d, &s.e, &params.controller.k_c, &params.inertia),
        j_o: observer_jacobian(&s.q, &s.q_f, &params.observer.k_o),
    })
}

fn put<T: Real>(out: &mut Mat9<T>, r: usize, c: usize, block: &Matrix3<T>) {
    out.fixed_view_mut::<3, 3>(3 * r, 3 * c).copy_from(block);
}

fn block<T: Real>(m: &Mat9<T>, r: usize, c: usize) -> Matrix3<T> {
    m.fixed_view::<3, 3>(3 * r, 3 * c).into_owned()
}

/// Virtual closed-loop field `f̄(ξ)` (right-hand side of `M₂ ξ̇`, without the torque input),
/// with the true trajectory `(b, ω)` and the sample's `z`, `ω_r`, `e` as exogenous signals.
pub fn virtual_field<T: Real>(xi: &Vec9<T>, s: &LoopSample<T>, params: &LoopParams<T>) -> Result<Vec9<T>> {
    let bl = blocks(s, params)?;
    let lambda_c = params.controller.lambda_c;
    let half = T::lit(0.5);
    let x1: Vector3<T> = xi.fixed_rows::<3>(0).into_owned();
    let x2: Vector3<T> = xi.fixed_rows::<3>(3).into_owned();
    let x3: Vector3<T> = xi.fixed_rows::<3>(6).into_owned();
    let b_tilde = x1 - s.b;
    let slip = s.omega - x2;

    let f1 = coupled_error_rate(&s.q, &s.q_f, &b_tilde, &bl.p, &slip, &params.observer);
    let f2 = skew(&(bl.m * s.omega)) * x2
        + (params.controller.k_c - bl.p_a * (T::lit(2.0) * lambda_c)) * slip
        + (bl.f - bl.p.transpose() * lambda_c) * b_tilde
        + bl.g.transpose() * x3 * half;
    let f3 = bl.g * slip * half - x3 * lambda_c;

    let mut out = Vec9::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&f1);
    out.fixed_rows_mut::<3>(3).copy_from(&f2);
    out.fixed_rows_mut::<3>(6).copy_from(&f3);
    Ok(out)
}

/// Closed-loop Jacobian `J_oc = ∂f̄/∂ξ` in closed form.
pub fn closed_loop_jacobian<T: Real>(s: &LoopSample<T>, params: &LoopParams<T>) -> Result<Mat9<T>> {
    let bl = blocks(s, params)?;
    let lc = params.controller.lambda_c;
    let half = T::lit(0.5);
    let mut j = Mat9::zeros();
    put(&mut j, 0, 0, &bl.j_o);
    put(&mut j, 0, 1, &(bl.p * lc));
    put(&mut j, 1, 0, &(bl.f - bl.p.transpose() * lc));
    put(&mut j, 1, 1, &(skew(&(bl.m * s.omega)) - params.controller.k_c + bl.p_a * (T::lit(2.0) * lc)));
    put(&mut j, 1, 2, &(bl.g.transpose() * half));
    put(&mut j, 2, 1, &(-bl.g * half));
    put(&mut j, 2, 2, &(-Matrix3::identity() * lc));
    Ok(j)
}

/// The blocks of `J_oc` that are skew under `δξᵀ(·)δξ`.
pub fn skew_coupling<T: Real>(s: &LoopSample<T>, params: &LoopParams<T>) -> Result<Mat9<T>> {
    let bl = blocks(s, params)?;
    let lc = params.controller.lambda_c;
    let half = T::lit(0.5);
    let mut w = Mat9::zeros();
    put(&mut w, 0, 1, &(bl.p * lc));
    put(&mut w, 1, 0, &(-bl.p.transpose() * lc));
    put(&mut w, 1, 1, &(skew(&(bl.m * s.omega)) + bl.p_a * (T::lit(2.0) * lc)));
    put(&mut w, 1, 2, &(bl.g.transpose() * half));
    put(&mut w, 2, 1, &(-bl.g * half));
    Ok(w)
}

/// Hierarchical form `J_s = [[J_o, 0], [F, J_c]]` assembled from its blocks.
pub fn hierarchical_jacobian<T: Real>(s: &LoopSample<T>, params: &LoopParams<T>) -> Result<Mat9<T>> {
    let bl = blocks(s, params)?;
    let mut j = Mat9::zeros();
    put(&mut j, 0, 0, &bl.j_o);
    put(&mut j, 1, 0, &bl.f);
    put(&mut j, 1, 1, &(-params.controller.k_c));
    put(&mut j, 2, 2, &(-Matrix3::identity() * params.controller.lambda_c));
    Ok(j)
}

/// Central-difference Jacobian with per-coordinate step `rel_step · max(1, |x_i|)`.
pub fn fd_jacobian<T: Real, const N: usize, F>(f: F, x: &SVector<T, N>, rel_step: T) -> Result<SMatrix<T, N, N>>
where
    F: Fn(&SVector<T, N>) -> Result<SVector<T, N>>,
{
    let mut j = SMatrix::<T, N, N>::zeros();
    for i in 0..N {
        let h = rel_step * x[i].abs().max(T::one());
        let mut xp = *x;
        let mut xm = *x;
        xp[i] += h;
        xm[i] -= h;
        let col = (f(&xp)? - f(&xm)?) / (h + h);
        j.set_column(i, &col);
    }
    Ok(j)
}

/// Largest eigenvalue of the symmetric part of a square matrix.
pub fn max_sym_eigenvalue<T: Real, const N: usize>(a: &SMatrix<T, N, N>) -> T {
    let sym = nalgebra::DMatrix::from_fn(N, N, |i, j| (a[(i, j)] + a[(j, i)]) * T::lit(0.5));
    SymmetricEigen::new(sym).eigenvalues.max()
}

fn sym_eigen_extremes(m: &Matrix3<f64>) -> (f64, f64) {
    let ev = SymmetricEigen::new(*m).eigenvalues;
    (ev.min(), ev.max())
}

/// Options for [`certify_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyOptions {
    /// Number of randomly chosen samples that get the finite-difference check; `None` checks all.
    pub fd_samples: Option<usize>,
    pub fd_rel_step: f64,
    pub fd_tolerance: f64,
    pub block_tolerance: f64,
    pub antisymmetry_tolerance: f64,
    pub eigen_slack: f64,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            fd_samples: None,
            fd_rel_step: 1e-6,
            fd_tolerance: 1e-5,
            block_tolerance: 1e-12,
            antisymmetry_tolerance: 1e-10,
            eigen_slack: 1e-8,
            seed: 0,
        }
    }
}

/// Per-sample certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub t: f64,
    pub h: i8,
    /// `λ_max(sym J_o)`.
    pub lambda_max_sym_jo: f64,
    /// `-½(λ_min(K_o) - λ_max(K_o) ‖q - q_f‖)` at this sample.
    pub jo_bound: f64,
    /// `λ_max(sym J_c)` with `J_c` read off the lower-right 6×6 block of `J_s`.
    pub lambda_max_sym_jc: f64,
    /// Spectral norm of the coupling block `F`.
    pub norm_f: f64,
    /// Relative max-abs mismatch between finite-difference and analytic `J_oc`, if checked.
    pub fd_mismatch: Option<f64>,
    /// Max-abs entry of the upper-right 3×6 block of `J_s = J_oc - W`, plus its deviation from
    /// the hierarchical assembly.
    pub block_zero_residual: f64,
    /// `max |δξᵀ W δξ| / ‖δξ‖²` over probe directions.
    pub antisymmetry_residual: f64,
    pub filter_gap: f64,
    pub passed: bool,
}

/// Certificates over one constant-`h` stretch of a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub h: i8,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationSummary {
    pub samples: usize,
    pub fd_checked: usize,
    pub max_lambda_sym_jo: f64,
    /// `-½(λ_min(K_o) - λ_max(K_o) sup_t ‖q - q_f‖)`.
    pub sup_jo_bound: f64,
    pub sup_filter_gap: f64,
    pub max_lambda_sym_jc: f64,
    pub sup_norm_f: f64,
    pub max_fd_mismatch: f64,
    pub max_block_zero_residual: f64,
    pub max_antisymmetry_residual: f64,
    /// Smallest eigenvalue of the shared metric `diag{I, M, I}`.
    pub metric_min_eigenvalue: f64,
    pub segments: Vec<SegmentSummary>,
    pub failures: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub reports: Vec<JacobianReport>,
    pub summary: CertificationSummary,
}

/// Rebuilds the Jacobians at every logged sample and checks:
///
/// (a) `λ_max(sym J_o) ≤ -½(λ_min(K_o) - λ_max(K_o) ‖q - q_f‖)`,
/// (b) `J_c` negative definite,
/// (c) the upper-right block of `J_s` vanishes and `J_s` matches its hierarchical assembly,
/// (d) the removed blocks cancel in the quadratic form,
/// (e) the analytic `J_oc` matches central differences of [`virtual_field`].
///
/// Failures are collected in the summary rather than returned as errors.
pub fn certify_trajectory(
    log: &TrajectoryLog,
    params: &LoopParams<f64>,
    opts: &CertifyOptions,
) -> Result<Certification> {
    let n = log.rows.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut fd_mask = vec![opts.fd_samples.is_none(); n];
    if let Some(k) = opts.fd_samples {
        for i in sample(&mut rng, n, k.min(n)).into_iter() {
            fd_mask[i] = true;
        }
    }
    let probes: Vec<Vec9<f64>> = (0..8)
        .map(|_| Vec9::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0).normalize())
        .collect();

    let (ko_min, ko_max) = sym_eigen_extremes(&params.observer.k_o);
    let metric_min = SymmetricEigen::new(metric(&params.inertia)).eigenvalues.min();

    let mut reports = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (i, row) in log.rows.iter().enumerate() {
        let s = row.loop_sample();
        let j_oc = closed_loop_jacobian(&s, params)?;
        let w = skew_coupling(&s, params)?;
        let j_hier = hierarchical_jacobian(&s, params)?;
        let j_s = j_oc - w;

        let j_o = block(&j_s, 0, 0);
        let lambda_jo = max_sym_eigenvalue(&j_o);
        let gap = (s.q - s.q_f).norm();
        let jo_bound = -0.5 * (ko_min - ko_max * gap);

        let j_c: SMatrix<f64, 6, 6> = j_s.fixed_view::<6, 6>(3, 3).into_owned();
        let lambda_jc = max_sym_eigenvalue(&j_c);
        let f = block(&j_s, 1, 0);
        let norm_f = f.singular_values().max();

        let upper = j_s.fixed_view::<3, 6>(0, 3).amax();
        let block_res = upper.max((j_s - j_hier).amax());
        let anti = probes.iter().map(|d| (d.transpose() * w * d)[0].abs()).fold(0.0, f64::max);

        let fd_mismatch = if fd_mask[i] {
            let xi = row.virtual_state();
            let fd = fd_jacobian(|x| virtual_field(x, &s, params), &xi, opts.fd_rel_step)?;
            Some((fd - j_oc).amax() / j_oc.amax())
        } else {
            None
        };

        let mut why = Vec::new();
        if !(lambda_jo <= jo_bound + opts.eigen_slack) {
            why.push(format!("sym(J_o) max eigenvalue {lambda_jo:.3e} above bound {jo_bound:.3e}"));
        }
        if !(lambda_jc < 0.0) {
            why.push(format!("J_c not negative definite ({lambda_jc:.3e})"));
        }
        if !(block_res <= opts.block_tolerance) {
            why.push(format!("block residual {block_res:.3e}"));
        }
        if !(anti <= opts.antisymmetry_tolerance) {
            why.push(format!("antisymmetry residual {anti:.3e}"));
        }
        if let Some(m) = fd_mismatch {
            if !(m <= opts.fd_tolerance) {
                why.push(format!("finite-difference mismatch {m:.3e}"));
            }
        }
        if !norm_f.is_finite() {
            why.push("unbounded coupling block".into());
        }
        let passed = why.is_empty();
        if !passed {
            failures.push(format!("t = {:.4}: {}", s.t, why.join("; ")));
        }
        reports.push(JacobianReport {
            t: s.t,
            h: s.h,
            lambda_max_sym_jo: lambda_jo,
            jo_bound,
            lambda_max_sym_jc: lambda_jc,
            norm_f,
            fd_mismatch,
            block_zero_residual: block_res,
            antisymmetry_residual: anti,
            filter_gap: gap,
            passed,
        });
    }

    let mut segments: Vec<SegmentSummary> = Vec::new();
    for r in &reports {
        match segments.last_mut() {
            Some(seg) if seg.h == r.h => {
                seg.t_end = r.t;
                seg.samples += 1;
                seg.passed &= r.passed;
            }
            _ => segments.push(SegmentSummary { h: r.h, t_start: r.t, t_end: r.t, samples: 1, passed: r.passed }),
        }
    }

    let fold = |f: &dyn Fn(&JacobianReport) -> f64| reports.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let sup_gap = fold(&|r| r.filter_gap);
    let summary = CertificationSummary {
        samples: n,
        fd_checked: reports.iter().filter(|r| r.fd_mismatch.is_some()).count(),
        max_lambda_sym_jo: fold(&|r| r.lambda_max_sym_jo),
        sup_jo_bound: -0.5 * (ko_min - ko_max * sup_gap),
        sup_filter_gap: sup_gap,
        max_lambda_sym_jc: fold(&|r| r.lambda_max_sym_jc),
        sup_norm_f: fold(&|r| r.norm_f),
        max_fd_mismatch: reports.iter().filter_map(|r| r.fd_mismatch).fold(0.0, f64::max),
        max_block_zero_residual: fold(&|r| r.block_zero_residual),
        max_antisymmetry_residual: fold(&|r| r.antisymmetry_residual),
        metric_min_eigenvalue: metric_min,
        passed: failures.is_empty() && metric_min > 0.0 && n > 0,
        segments,
        failures,
    };
    Ok(Certification { reports, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attmath::{quat_exp, quat_log, LogOptions};
    use crate::control::ControllerGains;
    use crate::estimation::ObserverGains;
    use approx::assert_abs_diff_eq;

    fn params() -> LoopParams<f64> {
        LoopParams {
            inertia: InertiaModel::new(Matrix3::new(4.0, 0.3, -0.1, 0.3, 5.0, 0.2, -0.1, 0.2, 6.0)).unwrap(),
            controller: ControllerGains::new(Matrix3::from_diagonal(&Vector3::new(1.0, 1.5, 2.0)), 0.05).unwrap(),
            observer: ObserverGains::new(Matrix3::identity() * 1.5, 0.5, 0.05).unwrap(),
            log_opts: LogOptions::default(),
        }
    }

    fn sample_at(z: Vector3<f64>) -> LoopSample<f64> {
        let e = quat_exp(&z).unwrap();
        let q = UnitQuat::new(0.5, 0.5, -0.5, 0.5).unwrap();
        LoopSample {
            t: 0.0,
            q: *q.as_vec4(),
            q_f: q.as_vec4() + Vector4::new(0.01, -0.02, 0.0, 0.015),
            e,
            h: 1,
            z: quat_log(&e).unwrap(),
            omega: Vector3::new(0.3, -0.1, 0.2),
            omega_r: Vector3::new(0.25, -0.05, 0.15),
            omega_d: Vector3::new(0.0, 0.11, 0.0),
            b: Vector3::new(0.05, -0.05, 0.033),
            b_hat: Vector3::new(0.04, -0.02, 0.03),
        }
    }

    #[test]
    fn observer_jacobian_examples() {
        let q = Vector4::new(0.5, 0.5, -0.5, 0.5);
        let jo = observer_jacobian(&q, &q, &(Matrix3::identity() * 2.0));
        assert_abs_diff_eq!(jo, -Matrix3::identity(), epsilon = 1e-15);

        let k_o = Matrix3::new(2.0, 0.1, 0.0, 0.1, 1.0, 0.0, 0.0, 0.0, 1.5);
        let q_f = q + Vector4::new(0.0, 0.05, 0.02, -0.03);
        let diff = observer_jacobian(&q, &q_f, &k_o) - observer_jacobian(&q, &q, &k_o);
        let bound = 0.5 * k_o.norm() * (q_f - q).norm();
        assert!(diff.singular_values().max() <= bound + 1e-15);
    }

    #[test]
    fn coupling_examples() {
        let p = params();
        let k_c = p.controller.k_c;
        let e = UnitQuat::new(0.6, 0.0, 0.8, 0.0).unwrap();
        let f0 = coupling_matrix(&Vector3::zeros(), &Vector3::zeros(), &e, &k_c, &p.inertia);
        assert_eq!(f0, -k_c);
        let wr = Vector3::new(0.4, -0.2, 0.9);
        let wd = Vector3::new(-0.3, 0.5, 0.1);
        let f = coupling_matrix(&wr, &wd, &e, &k_c, &p.inertia);
        let m_norm = p.inertia.matrix().singular_values().max();
        let bound = m_norm * (wr.norm() + wd.norm()) + k_c.singular_values().max();
        assert!(f.singular_values().max() <= bound);
    }

    #[test]
    fn equilibrium_spectrum_is_block_diagonal() {
        let p = params();
        let mut s = sample_at(Vector3::zeros());
        s.q_f = s.q;
        s.omega_r = s.omega;
        s.b_hat = s.b;
        let j_s = closed_loop_jacobian(&s, &p).unwrap() - skew_coupling(&s, &p).unwrap();
        let j_c: SMatrix<f64, 6, 6> = j_s.fixed_view::<6, 6>(3, 3).into_owned();
        let mut ev: Vec<f64> = SymmetricEigen::new(j_c).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = [-2.0, -1.5, -1.0, -0.05, -0.05, -0.05];
        for (a, b) in ev.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = params();
        let s = sample_at(Vector3::new(0.8, -1.1, 0.6));
        let xi = Vec9::from_fn(|i, _| [0.1, -0.2, 0.05, 0.3, 0.1, -0.4, 0.2, 0.2, -0.1][i]);
        let fd = fd_jacobian(|x| virtual_field(x, &s, &p), &xi, 1e-6).unwrap();
        let an = closed_loop_jacobian(&s, &p).unwrap();
        assert!((fd - an).amax() / an.amax() < 1e-8);
    }

    #[test]
    fn removed_blocks_are_skew() {
        let p = params();
        let s = sample_at(Vector3::new(-0.4, 1.9, 0.3));
        let w = skew_coupling(&s, &p).unwrap();
        assert!((w + w.transpose()).amax() < 1e-14);
        let j_s = closed_loop_jacobian(&s, &p).unwrap() - w;
        assert!((j_s - hierarchical_jacobian(&s, &p).unwrap()).amax() < 1e-12);
        assert_eq!(j_s.fixed_view::<3, 6>(0, 3).amax(), 0.0);
    }

    #[test]
    fn metric_is_spd() {
        let p = params();
        let m2 = metric(&p.inertia);
        assert_eq!(m2, m2.transpose());
        assert!(SymmetricEigen::new(m2).eigenvalues.min() > 0.0);
    }
}
