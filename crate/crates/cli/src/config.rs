use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use repel_core::{uniform_grid, ExperimentPlan, Geometry, SchemeConfig, SystemSpec, TestKind};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "repel-sim", version, about = "Simulate and verify mutually repelling Brownian particles")]
struct Cli {
    #[command(subcommand)]
    command: CommandArg,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum CommandArg {
    /// Integrate one path and write it on the output grid
    Simulate,
    /// Compare S/(2N) at t_end with its squared Bessel law
    VerifyBessel,
    /// Pairwise and 3-window collision statistics
    CollisionScan,
    /// Fuzz the algebraic identities behind the Bessel law
    IdentityCheck,
    /// Compare the lambda = 1/2 system with the symmetric matrix eigenvalue process
    OracleCompare,
}

#[derive(Debug, Clone, Default, Args)]
struct CommonArgs {
    /// Flat `key = value` file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    geometry: Option<GeometryArg>,
    /// Number of particles
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Comma-separated initial positions
    #[arg(long, global = true, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Spacing of an evenly spaced start (used when --x0 is absent)
    #[arg(long, global = true, allow_hyphen_values = true)]
    gap: Option<f64>,
    #[arg(long = "t-end", global = true, allow_hyphen_values = true)]
    t_end: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "dt-max", global = true)]
    dt_max: Option<f64>,
    #[arg(long = "dt-min", global = true)]
    dt_min: Option<f64>,
    /// Gap safety factor of the adaptive step
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long = "no-taming", global = true)]
    no_taming: bool,
    /// Monte Carlo paths (identity-check: random configurations)
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long = "grid-points", global = true)]
    grid_points: Option<usize>,
    /// Pairwise collision threshold on the minimum gap
    #[arg(long, global = true, allow_hyphen_values = true)]
    threshold: Option<f64>,
    /// Threshold on 3-window spreads
    #[arg(long = "multiple-threshold", global = true)]
    multiple_threshold: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Output file (default: stdout)
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeometryArg {
    Line,
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Simulate(ExperimentPlan),
    VerifyBessel(ExperimentPlan),
    CollisionScan(ExperimentPlan),
    OracleCompare(ExperimentPlan),
    IdentityCheck {
        samples: usize,
        seed: u64,
        n: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub job: Job,
    pub format: Format,
    pub output: Option<PathBuf>,
}

pub const DEFAULT_PATHS: usize = 1000;
pub const DEFAULT_IDENTITY_SAMPLES: usize = 10_000;
pub const DEFAULT_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_MULTIPLE_THRESHOLD: f64 = 1e-5;
pub const ORACLE_LAMBDA: f64 = 0.5;

/// Parses `argv` (program name first) and validates the result.
pub fn parse_args<I, T>(argv: I) -> Result<CliConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let mut args = cli.common;
    if let Some(path) = args.config.clone() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        merge_config(&mut args, &parse_config_text(&text)?)?;
    }
    build(cli.command, args)
}

/// Parses flat `key = value` text. Blank lines and `#` comments are
/// ignored; dashes in keys are read as underscores.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected `key = value`", lineno + 1))
        })?;
        let value = value.trim().trim_matches('"');
        out.insert(key.trim().replace('-', "_"), value.to_owned());
    }
    Ok(out)
}

fn config_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{value}`")))
}

fn merge_config(args: &mut CommonArgs, entries: &BTreeMap<String, String>) -> Result<(), CliError> {
    fn fill<T: std::str::FromStr>(slot: &mut Option<T>, key: &str, value: &str) -> Result<(), CliError> {
        if slot.is_none() {
            *slot = Some(config_value(key, value)?);
        }
        Ok(())
    }
    for (key, value) in entries {
        let v = value.as_str();
        match key.as_str() {
            "geometry" => {
                if args.geometry.is_none() {
                    args.geometry = Some(
                        GeometryArg::from_str(v, true)
                            .map_err(|_| CliError::Usage(format!("config key `geometry`: cannot parse `{v}`")))?,
                    );
                }
            }
            "format" => {
                if args.format.is_none() {
                    args.format = Some(
                        Format::from_str(v, true)
                            .map_err(|_| CliError::Usage(format!("config key `format`: cannot parse `{v}`")))?,
                    );
                }
            }
            "n" => fill(&mut args.n, key, v)?,
            "lambda" => fill(&mut args.lambda, key, v)?,
            "x0" => fill(&mut args.x0, key, v)?,
            "gap" => fill(&mut args.gap, key, v)?,
            "t_end" => fill(&mut args.t_end, key, v)?,
            "seed" => fill(&mut args.seed, key, v)?,
            "dt_max" => fill(&mut args.dt_max, key, v)?,
            "dt_min" => fill(&mut args.dt_min, key, v)?,
            "alpha" => fill(&mut args.alpha, key, v)?,
            "paths" => fill(&mut args.paths, key, v)?,
            "grid_points" => fill(&mut args.grid_points, key, v)?,
            "threshold" => fill(&mut args.threshold, key, v)?,
            "multiple_threshold" => fill(&mut args.multiple_threshold, key, v)?,
            "output" => fill(&mut args.output, key, v)?,
            "taming" => {
                if !args.no_taming {
                    args.no_taming = !config_value::<bool>(key, v)?;
                }
            }
            "no_taming" => args.no_taming |= config_value::<bool>(key, v)?,
            other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
        }
    }
    Ok(())
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn initial_positions(args: &CommonArgs, geometry: Geometry) -> Result<Vec<f64>, CliError> {
    if let Some(text) = &args.x0 {
        let xs = text
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Usage(format!("--x0: cannot parse `{text}`")))?;
        if let Some(n) = args.n {
            if n != xs.len() {
                return Err(invalid(format!("--n {n} disagrees with {} values in --x0", xs.len())));
            }
        }
        return Ok(xs);
    }
    let n = args.n.unwrap_or(3);
    if n < 3 {
        return Err(invalid(format!("N must be >= 3 (got {n})")));
    }
    let gap = match (args.gap, geometry) {
        (Some(g), _) => g,
        (None, Geometry::Line) => 1.0,
        (None, Geometry::Circle) => TAU / n as f64,
    };
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(invalid(format!("gap must be > 0 (got {gap})")));
    }
    Ok((0..n).map(|i| gap * i as f64).collect())
}

fn build(command: CommandArg, args: CommonArgs) -> Result<CliConfig, CliError> {
    let seed = args
        .seed
        .ok_or_else(|| CliError::Usage("--seed is required (no wall-clock seeding)".into()))?;
    let format = args.format.unwrap_or(match command {
        CommandArg::Simulate => Format::Csv,
        _ => Format::Json,
    });
    let output = args.output.clone();

    if command == CommandArg::IdentityCheck {
        if let Some(n) = args.n {
            if n < 3 {
                return Err(invalid(format!("N must be >= 3 (got {n})")));
            }
        }
        let samples = args.paths.unwrap_or(DEFAULT_IDENTITY_SAMPLES);
        if samples == 0 {
            return Err(invalid("paths must be >= 1"));
        }
        return Ok(CliConfig {
            job: Job::IdentityCheck {
                samples,
                seed,
                n: args.n,
            },
            format,
            output,
        });
    }

    let geometry = match args.geometry.unwrap_or(GeometryArg::Line) {
        GeometryArg::Line => Geometry::Line,
        GeometryArg::Circle => Geometry::Circle,
    };
    let lambda = match (command, args.lambda) {
        (_, Some(l)) => l,
        (CommandArg::OracleCompare, None) => ORACLE_LAMBDA,
        (_, None) => return Err(CliError::Usage("--lambda is required".into())),
    };
    let xs = initial_positions(&args, geometry)?;
    let spec = SystemSpec::new(geometry, lambda, xs).map_err(|e| invalid(e.to_string()))?;

    let defaults = SchemeConfig::default();
    let cfg = SchemeConfig {
        dt_max: args.dt_max.unwrap_or(defaults.dt_max),
        dt_min: args.dt_min.unwrap_or(defaults.dt_min),
        gap_safety: args.alpha.unwrap_or(defaults.gap_safety),
        taming: !args.no_taming,
        ..defaults
    };
    let t_end = args.t_end.unwrap_or(1.0);
    let grid_points = args.grid_points.unwrap_or(match command {
        CommandArg::Simulate => 100,
        CommandArg::CollisionScan => 1000,
        _ => 1,
    });
    if grid_points == 0 {
        return Err(invalid("grid_points must be >= 1"));
    }
    let threshold = args.threshold.unwrap_or(DEFAULT_THRESHOLD);
    let multiple_threshold = args.multiple_threshold.unwrap_or(DEFAULT_MULTIPLE_THRESHOLD);
    let tests = match command {
        CommandArg::VerifyBessel => vec![TestKind::BesselMoments, TestKind::BesselKs],
        CommandArg::CollisionScan => vec![
            TestKind::CollisionScan { threshold },
            TestKind::MultipleCollisionScan {
                threshold: multiple_threshold,
            },
        ],
        _ => Vec::new(),
    };
    let plan = ExperimentPlan {
        spec,
        cfg,
        t_end,
        grid: if t_end > 0.0 && t_end.is_finite() {
            uniform_grid(t_end, grid_points)
        } else {
            Vec::new()
        },
        n_paths: match command {
            CommandArg::Simulate => 1,
            _ => args.paths.unwrap_or(DEFAULT_PATHS),
        },
        master_seed: seed,
        tests,
    };
    plan.validate().map_err(|e| invalid(e.to_string()))?;

    let job = match command {
        CommandArg::Simulate => Job::Simulate(plan),
        CommandArg::VerifyBessel => Job::VerifyBessel(plan),
        CommandArg::CollisionScan => Job::CollisionScan(plan),
        CommandArg::OracleCompare => {
            if geometry != Geometry::Line {
                return Err(invalid("oracle-compare needs the line geometry"));
            }
            if lambda != ORACLE_LAMBDA {
                return Err(invalid(format!("oracle-compare needs lambda = 0.5 (got {lambda})")));
            }
            if plan.spec.n_particles() > 64 {
                return Err(invalid("oracle-compare needs N <= 64"));
            }
            Job::OracleCompare(plan)
        }
        CommandArg::IdentityCheck => unreachable!(),
    };
    Ok(CliConfig { job, format, output })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<CliConfig, CliError> {
        parse_args(std::iter::once("repel-sim").chain(args.iter().copied()))
    }

    #[test]
    fn minimal_simulate() {
        let cfg = parse(&["simulate", "--n", "3", "--lambda", "1.0", "--t-end", "1.0", "--seed", "42"]).unwrap();
        assert_eq!(cfg.format, Format::Csv);
        let Job::Simulate(plan) = cfg.job else { panic!() };
        assert_eq!(plan.spec.initial_positions(), &[0.0, 1.0, 2.0]);
        assert_eq!(plan.master_seed, 42);
        assert_eq!(plan.grid.len(), 100);
    }

    #[test]
    fn negative_lambda_is_validation_error() {
        let err = parse(&["simulate", "--lambda", "-1", "--seed", "1"]).unwrap_err();
        assert!(matches!(err, CliError::Validation(ref m) if m.contains("lambda must be > 0")), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn two_particles_rejected() {
        let err = parse(&["simulate", "--n", "2", "--lambda", "1", "--seed", "1"]).unwrap_err();
        assert!(err.to_string().contains("N must be >= 3"), "{err}");
        let err = parse(&["simulate", "--x0", "0,1", "--lambda", "1", "--seed", "1"]).unwrap_err();
        assert!(err.to_string().contains("N must be >= 3"), "{err}");
    }

    #[test]
    fn seed_is_required() {
        let err = parse(&["verify-bessel", "--lambda", "1"]).unwrap_err();
        assert!(matches!(err, CliError::Usage(ref m) if m.contains("--seed")));
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let err = parse(&["simulate", "--bogus", "1"]).unwrap_err();
        assert!(matches!(err, CliError::Usage(ref m) if m.contains("--bogus")), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn config_text() {
        let map = parse_config_text("# comment\nlambda = 0.5\n\nt-end=2 # trailing\n").unwrap();
        assert_eq!(map["lambda"], "0.5");
        assert_eq!(map["t_end"], "2");
        assert!(parse_config_text("lambda 0.5").is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut args = CommonArgs {
            lambda: Some(2.0),
            ..Default::default()
        };
        let map = parse_config_text("lambda = 0.5\nseed = 9\ntaming = false").unwrap();
        merge_config(&mut args, &map).unwrap();
        assert_eq!(args.lambda, Some(2.0));
        assert_eq!(args.seed, Some(9));
        assert!(args.no_taming);
        assert!(merge_config(&mut args, &parse_config_text("colour = red").unwrap()).is_err());
    }

    #[test]
    fn oracle_defaults_and_checks() {
        let cfg = parse(&["oracle-compare", "--x0", "-1,0,1", "--seed", "3"]).unwrap();
        let Job::OracleCompare(plan) = cfg.job else { panic!() };
        assert_eq!(plan.spec.coupling(), 0.5);
        assert!(parse(&["oracle-compare", "--lambda", "1", "--seed", "3"]).is_err());
    }

    #[test]
    fn circle_default_start_is_equally_spaced() {
        let cfg = parse(&["simulate", "--geometry", "circle", "--n", "4", "--lambda", "0.1", "--seed", "1"]).unwrap();
        let Job::Simulate(plan) = cfg.job else { panic!() };
        assert!((plan.spec.initial_positions()[3] - 1.5 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn bad_step_sizes_rejected_before_compute() {
        let err = parse(&["collision-scan", "--lambda", "1", "--seed", "1", "--dt-min", "1", "--dt-max", "0.1"]).unwrap_err();
        assert!(err.to_string().contains("dt_min"), "{err}");
    }
}
