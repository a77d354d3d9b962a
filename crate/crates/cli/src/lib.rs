//! `repel-sim`: command-line experiments on top of `repel-core`.

pub mod config;
pub mod emit;

use std::fs::File;
use std::io::{BufWriter, Write};

use rand::Rng;
use repel_core::{
    drift_identity_residual, ks_one_sample, ks_two_sample, map_paths, min_gap, qv_identity_residual,
    run_ensemble, sample_goe_eigenvalues, simulate_path, spread_total, ExperimentPlan, Geometry,
    MatrixEnsembleSpec, McReport, NoiseSource, PlanEcho, Seeds, TestEntry,
};
use serde::Serialize;

pub use config::{parse_args, parse_config_text, CliConfig, Format, Job};
pub use emit::{emit_json, emit_report_csv, emit_report_json, emit_trajectory_csv};

pub const THREADS_ENV: &str = "REPEL_SIM_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// `--help` or `--version` output; not a failure.
    #[error("{0}")]
    Info(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] repel_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => 0,
            CliError::Usage(_) | CliError::Validation(_) => 2,
            CliError::Core(repel_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

impl From<clap::Error> for CliError {
    fn from(e: clap::Error) -> Self {
        use clap::error::ErrorKind;
        let text = e.render().to_string().trim_end().to_owned();
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::Info(text),
            _ => CliError::Usage(text),
        }
    }
}

/// Reads the worker cap from the environment value, if any.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Validation(format!("{THREADS_ENV} must be an integer >= 1 (got `{v}`)"))),
        },
    }
}

/// Whether the requested checks passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub passed: bool,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

pub fn execute(cfg: &CliConfig) -> Result<Outcome, CliError> {
    match &cfg.output {
        Some(path) => {
            let mut sink = BufWriter::new(File::create(path)?);
            let outcome = execute_to(cfg, &mut sink)?;
            sink.flush()?;
            Ok(outcome)
        }
        None => {
            let stdout = std::io::stdout();
            let mut sink = BufWriter::new(stdout.lock());
            let outcome = execute_to(cfg, &mut sink)?;
            sink.flush()?;
            Ok(outcome)
        }
    }
}

pub fn execute_to(cfg: &CliConfig, sink: &mut impl Write) -> Result<Outcome, CliError> {
    match &cfg.job {
        Job::Simulate(plan) => {
            let record = simulate_path(&plan.spec, &plan.cfg, plan.t_end, &plan.grid, plan.noise(0))?;
            match cfg.format {
                Format::Csv => emit_trajectory_csv(&record, sink)?,
                Format::Json => emit_json(&record, sink)?,
            }
            Ok(Outcome { passed: true })
        }
        Job::VerifyBessel(plan) | Job::CollisionScan(plan) => {
            let report = run_ensemble(plan)?;
            write_report(&report, cfg.format, sink)
        }
        Job::OracleCompare(plan) => {
            let report = oracle_compare(plan)?;
            write_report(&report, cfg.format, sink)
        }
        Job::IdentityCheck { samples, seed, n } => {
            let summary = identity_check(*samples, *seed, *n);
            match cfg.format {
                Format::Json => emit_json(&summary, sink)?,
                Format::Csv => {
                    writeln!(sink, "samples,seed,max_qv_residual,max_qv_ratio,max_drift_residual,max_drift_ratio,passed")?;
                    writeln!(
                        sink,
                        "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                        summary.samples,
                        summary.seed,
                        summary.max_qv_residual,
                        summary.max_qv_ratio,
                        summary.max_drift_residual,
                        summary.max_drift_ratio,
                        summary.passed
                    )?;
                }
            }
            Ok(Outcome { passed: summary.passed })
        }
    }
}

fn write_report(report: &McReport, format: Format, sink: &mut impl Write) -> Result<Outcome, CliError> {
    match format {
        Format::Json => emit_report_json(report, sink)?,
        Format::Csv => emit_report_csv(report, sink)?,
    }
    Ok(Outcome {
        passed: report.passed() && report.failures == 0,
    })
}

/// `S/(2N)` at `plan.t_end` from exact matrix draws against the integrator,
/// and both against the squared Bessel law.
pub fn oracle_compare(plan: &ExperimentPlan) -> Result<McReport, CliError> {
    plan.validate()?;
    let t = plan.t_end;
    let x0 = plan.spec.initial_positions().to_vec();
    let n = x0.len() as f64;
    let matrix = MatrixEnsembleSpec::new(x0, t)?;
    let law = plan.bessel_reference()?;
    let scaled = |xs: &[f64]| spread_total(xs) / (2.0 * n);

    let oracle_noise = NoiseSource::new(plan.master_seed, 0).derive(1);
    let oracle = (0..plan.n_paths as u64)
        .map(|i| sample_goe_eigenvalues(&matrix, oracle_noise.with_stream(i)).map(|ev| scaled(&ev)))
        .collect::<Result<Vec<f64>, _>>()?;
    let final_only = ExperimentPlan {
        grid: vec![t],
        ..plan.clone()
    };
    let mut failures = 0;
    let mut sde = Vec::with_capacity(plan.n_paths);
    for r in map_paths(&final_only, |rec| Ok(scaled(&rec.positions[0])))? {
        match r {
            Ok(v) => sde.push(v),
            Err(_) => failures += 1,
        }
    }

    let mut tests = Vec::new();
    let ks = |name: &str, res: repel_core::KsResult| {
        let mut e = TestEntry::named(name, res.statistic);
        e.p_value = Some(res.p_value);
        e
    };
    tests.push(ks("oracle_two_sample_ks", ks_two_sample(&oracle, &sde)?));
    tests.push(ks("oracle_bessel_ks", ks_one_sample(&oracle, |y| law.cdf(t, y))?));
    tests.push(ks("bessel_ks", ks_one_sample(&sde, |y| law.cdf(t, y))?));
    Ok(McReport {
        plan_echo: PlanEcho::from(plan),
        seeds: Seeds {
            master_seed: plan.master_seed,
            first_stream: 0,
            last_stream: plan.n_paths as u64 - 1,
        },
        n_paths: sde.len(),
        tests,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentitySummary {
    pub samples: usize,
    pub seed: u64,
    pub max_qv_residual: f64,
    /// Largest residual relative to `1e-10·N²·max|x|²`.
    pub max_qv_ratio: f64,
    pub max_drift_residual: f64,
    /// Largest residual relative to `1e-9·N³`.
    pub max_drift_ratio: f64,
    pub passed: bool,
}

pub const IDENTITY_MIN_GAP: f64 = 1e-3;

/// Evaluates both identity residuals on random ordered configurations with
/// `N` in 3..=8 (or fixed `n`), scales spanning four decades, and neighbour
/// gaps of at least 1e-3.
pub fn identity_check(samples: usize, seed: u64, n: Option<usize>) -> IdentitySummary {
    let mut rng = NoiseSource::new(seed, 0).rng();
    let mut summary = IdentitySummary {
        samples,
        seed,
        max_qv_residual: 0.0,
        max_qv_ratio: 0.0,
        max_drift_residual: 0.0,
        max_drift_ratio: 0.0,
        passed: true,
    };
    let mut done = 0;
    while done < samples {
        let size = n.unwrap_or_else(|| rng.random_range(3..=8));
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let mut xs: Vec<f64> = (0..size).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        xs.sort_by(f64::total_cmp);
        if min_gap(&xs, Geometry::Line) < IDENTITY_MIN_GAP {
            continue;
        }
        done += 1;
        let nn = size as f64;
        let max_abs = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let qv = qv_identity_residual(&xs);
        let drift = drift_identity_residual(&xs).expect("gaps checked above");
        summary.max_qv_residual = summary.max_qv_residual.max(qv);
        summary.max_qv_ratio = summary.max_qv_ratio.max(qv / (1e-10 * nn * nn * max_abs * max_abs));
        summary.max_drift_residual = summary.max_drift_residual.max(drift);
        summary.max_drift_ratio = summary.max_drift_ratio.max(drift / (1e-9 * nn * nn * nn));
    }
    summary.passed = summary.max_qv_ratio <= 1.0 && summary.max_drift_ratio <= 1.0;
    summary
}
