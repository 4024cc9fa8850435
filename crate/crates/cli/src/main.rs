use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use attitrack::contraction::{certify_trajectory, CertifyOptions};
use attitrack::sim::io::{resolve_out_dir, write_certification_csv, write_run_outputs};
use attitrack::sim::{compute_metrics, run_scenario, Bands, MetricSummary, ScenarioConfig};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

/// Attitude tracking simulator with gyro-bias estimation and hysteretic switching.
///
/// The output directory is `--out`, else `$ATTITRACK_OUT_DIR`, else the config's
/// `output.dir`, else `./out`.
#[derive(Parser, Debug)]
#[command(name = "attitrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario and write trajectory, switch and metric files.
    Run(RunArgs),
    /// Simulate, then certify the contraction conditions along the log.
    Certify {
        #[command(flatten)]
        run: RunArgs,
        /// Samples that get the finite-difference Jacobian check (0 checks all).
        #[arg(long, default_value_t = 50)]
        fd_samples: usize,
    },
    /// Vary one config key over a list of values and tabulate the metrics.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dotted config key, e.g. `gains.lambda_c` or `hysteresis.delta`.
        #[arg(long)]
        key: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Built-in scenario.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3), conflicts_with = "config")]
    scenario: Option<u32>,
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides applied after loading.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.config, self.scenario) {
            (Some(path), _) => ScenarioConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?,
            (None, Some(id)) => ScenarioConfig::builtin(id)?,
            (None, None) => bail!("one of --scenario or --config is required"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        for kv in &self.overrides {
            let (k, v) = kv.split_once('=').with_context(|| format!("override `{kv}` is not KEY=VALUE"))?;
            cfg = cfg.with_override(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ScenarioConfig) -> PathBuf {
        match &self.out {
            Some(p) => p.clone(),
            None => resolve_out_dir(cfg.output.dir.as_deref(), Path::new("out")),
        }
    }
}

fn prefix(cfg: &ScenarioConfig) -> String {
    cfg.output.prefix.clone().unwrap_or_else(|| cfg.name.clone())
}

fn simulate(cfg: &ScenarioConfig, dir: &Path) -> Result<(attitrack::TrajectoryLog, MetricSummary)> {
    let log = run_scenario(cfg)?;
    let metrics = compute_metrics(&log, &Bands::default());
    let files = write_run_outputs(dir, &prefix(cfg), &log, &metrics)?;
    eprintln!("wrote {}", files.trajectory.display());
    Ok((log, metrics))
}

fn print_metrics(m: &MetricSummary) {
    println!(
        "{}: switches={} pointing={:.3e} omega_tilde={:.3e} bias_err={:.3e} effort={:.4}",
        m.name, m.switch_count, m.final_pointing_angle, m.final_omega_tilde, m.final_bias_error, m.final_effort
    );
}

/// Returns whether certification passed.
fn certify(cfg: &ScenarioConfig, log: &attitrack::TrajectoryLog, dir: &Path, fd_samples: usize) -> Result<bool> {
    let scenario = cfg.build()?;
    let opts = CertifyOptions { fd_samples: (fd_samples > 0).then_some(fd_samples), seed: cfg.seed, ..Default::default() };
    let cert = certify_trajectory(log, &scenario.params, &opts)?;
    let p = prefix(cfg);
    write_certification_csv(&cert.reports, File::create(dir.join(format!("{p}_certificates.csv")))?)?;
    serde_json::to_writer_pretty(File::create(dir.join(format!("{p}_certification.json")))?, &cert.summary)?;
    let s = &cert.summary;
    println!(
        "certification {}: samples={} fd_checked={} max_eig_sym_jo={:.4e} (bound {:.4e}) max_eig_sym_jc={:.4e} max_fd_mismatch={:.2e}",
        if s.passed { "PASSED" } else { "FAILED" },
        s.samples,
        s.fd_checked,
        s.max_lambda_sym_jo,
        s.sup_jo_bound,
        s.max_lambda_sym_jc,
        s.max_fd_mismatch
    );
    for seg in &s.segments {
        println!(
            "  h={:+} [{:.2}, {:.2}] samples={} {}",
            seg.h,
            seg.t_start,
            seg.t_end,
            seg.samples,
            if seg.passed { "ok" } else { "FAILED" }
        );
    }
    for f in s.failures.iter().take(10) {
        eprintln!("  {f}");
    }
    Ok(s.passed)
}

fn sweep_row(key: &str, value: &str, m: &MetricSummary) -> Vec<String> {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
    vec![
        key.to_string(),
        value.to_string(),
        m.switch_count.to_string(),
        format!("{:.16e}", m.final_pointing_angle),
        format!("{:.16e}", m.final_omega_tilde),
        format!("{:.16e}", m.final_bias_error),
        format!("{:.16e}", m.final_effort),
        format!("{:.16e}", m.accumulated_rotation),
        format!("{:.16e}", m.final_omega_tilde_rms),
        format!("{:.16e}", m.final_bias_error_rms),
        format!("{:.16e}", m.max_filter_gap),
        opt(m.z_log_slope),
        opt(m.entry.pointing),
        opt(m.entry.omega_tilde),
        opt(m.entry.bias),
    ]
}

const SWEEP_HEADER: [&str; 15] = [
    "key",
    "value",
    "switch_count",
    "final_pointing_angle",
    "final_omega_tilde",
    "final_bias_error",
    "final_effort",
    "accumulated_rotation",
    "final_omega_tilde_rms",
    "final_bias_error_rms",
    "max_filter_gap",
    "z_log_slope",
    "entry_pointing",
    "entry_omega_tilde",
    "entry_bias",
];

fn sweep(run: &RunArgs, key: &str, values: &[String]) -> Result<()> {
    let base = run.load()?;
    let dir = run.out_dir(&base);
    let configs = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut c = base.with_override(key, v)?;
            c.output.prefix = Some(format!("{}_sweep{i}", prefix(&base)));
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<Result<MetricSummary>> =
        configs.par_iter().map(|c| simulate(c, &dir).map(|(_, m)| m)).collect();

    let table = dir.join(format!("{}_sweep.csv", prefix(&base)));
    let mut wr = csv::Writer::from_path(&table)?;
    wr.write_record(SWEEP_HEADER)?;
    let mut failed = 0;
    for (v, r) in values.iter().zip(&results) {
        match r {
            Ok(m) => {
                print_metrics(m);
                wr.write_record(sweep_row(key, v, m))?;
            }
            Err(e) => {
                failed += 1;
                eprintln!("{key}={v}: {e:#}");
            }
        }
    }
    wr.flush()?;
    println!("wrote {}", table.display());
    if failed > 0 {
        bail!("{failed} of {} sweep runs failed", values.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(run) => (|| {
            let cfg = run.load()?;
            let dir = run.out_dir(&cfg);
            let (log, m) = simulate(&cfg, &dir)?;
            print_metrics(&m);
            if cfg.certify {
                return certify(&cfg, &log, &dir, 50);
            }
            Ok(true)
        })(),
        Command::Certify { run, fd_samples } => (|| {
            let cfg = run.load()?;
            let dir = run.out_dir(&cfg);
            let (log, m) = simulate(&cfg, &dir)?;
            print_metrics(&m);
            certify(&cfg, &log, &dir, *fd_samples)
        })(),
        Command::Sweep { run, key, values } => sweep(run, key, values).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
