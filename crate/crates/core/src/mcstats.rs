//! Monte Carlo ensembles and the statistics that test them against the
//! squared Bessel law and the collision claims.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besq::BesqSpec;
use crate::error::{config_err, Error, Result};
use crate::integrate::{simulate_path, NoiseSource, Scheme, SchemeConfig, TrajectoryRecord};
use crate::model::{Geometry, SystemSpec};
use crate::observe::{first_hit, spread_total, Functional, ObservableSeries};

/// Significance level below which a KS comparison counts as a rejection.
pub const KS_ALPHA: f64 = 1e-3;
/// Largest |z| accepted by the moment comparisons.
pub const MOMENT_Z_LIMIT: f64 = 3.0;

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
///
/// For small `λ` the alternating series converges too slowly to be useful,
/// so its Jacobi-theta dual `1 − √(2π)/λ Σ e^{−(2k−1)²π²/(8λ²)}` is summed
/// instead. Terms are dropped once below `1e-10`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.0 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut sum = 0.0;
        for k in 1..=100u32 {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * pi2 / (8.0 * lambda * lambda)).exp();
            sum += term;
            if term < 1e-10 {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100u32 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-10 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `samples` against `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d = d.max(above.abs()).max(below.abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(n.sqrt() * d),
    })
}

/// Two-sample KS test with the asymptotic effective size `nm / (n + m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let effective = n * m / (n + m);
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(effective.sqrt() * d),
    })
}

// ---------------------------------------------------------------------------
// Estimators

/// Sample mean and variance with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub count: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

impl MomentEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::EmptySample);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let (mut m2, mut m4) = (0.0, 0.0);
        for &x in samples {
            let d = (x - mean) * (x - mean);
            m2 += d;
            m4 += d * d;
        }
        let variance = m2 / (n - 1.0);
        let central4 = m4 / n;
        let pop_var = m2 / n;
        Ok(Self {
            count: samples.len(),
            mean,
            mean_se: (variance / n).sqrt(),
            variance,
            variance_se: ((central4 - pop_var * pop_var).max(0.0) / n).sqrt(),
        })
    }
}

/// Binomial proportion with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub hits: usize,
    pub total: usize,
    pub value: f64,
    pub se: f64,
}

impl Frequency {
    pub fn from_flags(flags: impl IntoIterator<Item = bool>) -> Self {
        let (mut hits, mut total) = (0, 0);
        for f in flags {
            total += 1;
            hits += f as usize;
        }
        let value = if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        };
        let se = if total == 0 {
            0.0
        } else {
            (value * (1.0 - value) / total as f64).sqrt()
        };
        Self {
            hits,
            total,
            value,
            se,
        }
    }
}

/// Fraction of paths whose `functional` reaches `threshold` on the grid.
pub fn collision_frequency(
    series: &[ObservableSeries],
    functional: Functional,
    threshold: f64,
) -> Frequency {
    Frequency::from_flags(
        series
            .iter()
            .map(|s| first_hit(s, functional, threshold).is_some()),
    )
}

// ---------------------------------------------------------------------------
// Ensembles

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestKind {
    /// Mean and variance of `S/(2N)` at the final grid time.
    BesselMoments,
    /// KS of `S/(2N)` at the final grid time against the squared Bessel law.
    BesselKs,
    /// Frequency of paths whose minimum gap reaches `threshold`.
    CollisionScan { threshold: f64 },
    /// Minimum spread of every 3-particle window versus `threshold`.
    MultipleCollisionScan { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub spec: SystemSpec,
    pub cfg: SchemeConfig,
    pub t_end: f64,
    pub grid: Vec<f64>,
    pub n_paths: usize,
    pub master_seed: u64,
    pub tests: Vec<TestKind>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.n_paths == 0 {
            return config_err("n_paths must be >= 1");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return config_err("t_end must be > 0");
        }
        if self.grid.is_empty() || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return config_err("output grid must be nonempty and strictly increasing");
        }
        if self.grid[self.grid.len() - 1] > self.t_end || self.grid[0] < 0.0 {
            return config_err("output grid must lie in [0, t_end]");
        }
        if self.cfg.scheme == Scheme::ExactFree && self.spec.coupling() != 0.0 {
            return config_err("exact-free scheme needs lambda = 0");
        }
        for test in &self.tests {
            match *test {
                TestKind::CollisionScan { threshold }
                | TestKind::MultipleCollisionScan { threshold } => {
                    if !(threshold > 0.0) {
                        return config_err("thresholds must be > 0");
                    }
                }
                TestKind::BesselMoments if self.n_paths < 2 => {
                    return config_err("Bessel moments need n_paths >= 2");
                }
                TestKind::BesselMoments | TestKind::BesselKs => {
                    if self.spec.geometry() != Geometry::Line {
                        return config_err("Bessel tests apply to the line system only");
                    }
                    if *self.grid.last().unwrap() <= 0.0 {
                        return config_err("Bessel tests need a final grid time > 0");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn noise(&self, path: usize) -> NoiseSource {
        NoiseSource::new(self.master_seed, path as u64)
    }

    /// Reference law of `S/(2N)` for this plan's system.
    pub fn bessel_reference(&self) -> Result<BesqSpec> {
        BesqSpec::for_system(
            self.spec.n_particles(),
            self.spec.coupling(),
            spread_total(self.spec.initial_positions()),
        )
    }

    fn window_sizes(&self) -> Vec<usize> {
        if self
            .tests
            .iter()
            .any(|t| matches!(t, TestKind::MultipleCollisionScan { .. }))
        {
            vec![3]
        } else {
            Vec::new()
        }
    }
}

/// Simulates every path of `plan` and maps each record through `f`.
///
/// Paths run in parallel on the current rayon pool; results come back in
/// stream order, so the output does not depend on the worker count.
pub fn map_paths<T, F>(plan: &ExperimentPlan, f: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(&TrajectoryRecord) -> Result<T> + Sync,
{
    plan.validate()?;
    Ok((0..plan.n_paths)
        .into_par_iter()
        .map(|i| {
            let record = simulate_path(&plan.spec, &plan.cfg, plan.t_end, &plan.grid, plan.noise(i))?;
            f(&record)
        })
        .collect())
}

#[derive(Debug, Clone)]
struct PathSummary {
    terminal_scaled_spread: f64,
    gap_hits: Vec<bool>,
    min_window_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEcho {
    pub geometry: Geometry,
    pub n: usize,
    pub lambda: f64,
    pub initial_positions: Vec<f64>,
    pub scheme: Scheme,
    pub dt_max: f64,
    pub dt_min: f64,
    pub gap_safety: f64,
    pub taming: bool,
    pub t_end: f64,
    pub grid_points: usize,
    pub requested_paths: usize,
}

impl From<&ExperimentPlan> for PlanEcho {
    fn from(plan: &ExperimentPlan) -> Self {
        Self {
            geometry: plan.spec.geometry(),
            n: plan.spec.n_particles(),
            lambda: plan.spec.coupling(),
            initial_positions: plan.spec.initial_positions().to_vec(),
            scheme: plan.cfg.scheme,
            dt_max: plan.cfg.dt_max,
            dt_min: plan.cfg.dt_min,
            gap_safety: plan.cfg.gap_safety,
            taming: plan.cfg.taming,
            t_end: plan.t_end,
            grid_points: plan.grid.len(),
            requested_paths: plan.n_paths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master_seed: u64,
    pub first_stream: u64,
    pub last_stream: u64,
}

/// One line of a report. Which optional fields are present depends on
/// `name`:
///
/// * `bessel_mean`, `bessel_variance`: `statistic` is the z-score against the
///   exact moment, with `mean` and `se` the estimate and its standard error.
/// * `bessel_ks` and any other `*_ks` entry: `statistic` is D, with
///   `p_value`.
/// * `collision_scan`: `statistic` and `frequency` are the hit frequency.
/// * `multiple_collision_scan`: `statistic` is the smallest window spread
///   seen, `frequency` the fraction of paths at or below `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEntry {
    pub name: String,
    pub statistic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl TestEntry {
    pub fn named(name: &str, statistic: f64) -> Self {
        Self {
            name: name.to_owned(),
            statistic,
            p_value: None,
            mean: None,
            se: None,
            frequency: None,
            threshold: None,
        }
    }

    /// Whether the entry meets its acceptance rule. Collision frequencies
    /// are descriptive and always pass.
    pub fn passed(&self) -> bool {
        match self.name.as_str() {
            "bessel_mean" | "bessel_variance" => self.statistic.abs() <= MOMENT_Z_LIMIT,
            name if name.ends_with("_ks") => self.p_value.is_some_and(|p| p > KS_ALPHA),
            "multiple_collision_scan" => self.threshold.is_some_and(|t| self.statistic > t),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub plan_echo: PlanEcho,
    pub seeds: Seeds,
    /// Paths that completed.
    pub n_paths: usize,
    pub tests: Vec<TestEntry>,
    /// Paths that ended in an error.
    pub failures: usize,
}

impl McReport {
    pub fn passed(&self) -> bool {
        self.tests.iter().all(TestEntry::passed)
    }

    pub fn entry(&self, name: &str) -> Option<&TestEntry> {
        self.tests.iter().find(|t| t.name == name)
    }
}

/// Runs `plan.n_paths` independent paths (stream id = path index) and
/// evaluates the requested tests.
pub fn run_ensemble(plan: &ExperimentPlan) -> Result<McReport> {
    plan.validate()?;
    let window_sizes = plan.window_sizes();
    let gap_thresholds: Vec<f64> = plan
        .tests
        .iter()
        .filter_map(|t| match *t {
            TestKind::CollisionScan { threshold } => Some(threshold),
            _ => None,
        })
        .collect();
    let n = plan.spec.n_particles() as f64;

    let results = map_paths(plan, |record| {
        let series = ObservableSeries::from_record(record, &window_sizes)?;
        Ok(PathSummary {
            terminal_scaled_spread: series.s_total[series.len() - 1] / (2.0 * n),
            gap_hits: gap_thresholds
                .iter()
                .map(|&th| first_hit(&series, Functional::MinGap, th).is_some())
                .collect(),
            min_window_spread: series.min_window_spread().unwrap_or(f64::INFINITY),
        })
    })?;

    let mut failures = 0;
    let mut paths = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(p) => paths.push(p),
            Err(Error::Config(msg)) => return Err(Error::Config(msg)),
            Err(_) => failures += 1,
        }
    }

    let mut tests = Vec::new();
    let mut gap_slot = 0;
    let terminal: Vec<f64> = paths.iter().map(|p| p.terminal_scaled_spread).collect();
    let t_final = *plan.grid.last().expect("validated grid");
    for test in &plan.tests {
        match *test {
            TestKind::BesselMoments => {
                let law = plan.bessel_reference()?;
                let (mean, var) = crate::besq::besq_mean_var(&law, t_final);
                let est = MomentEstimate::from_samples(&terminal)?;
                let mut m = TestEntry::named("bessel_mean", z_score(est.mean, mean, est.mean_se));
                m.mean = Some(est.mean);
                m.se = Some(est.mean_se);
                tests.push(m);
                let mut v = TestEntry::named(
                    "bessel_variance",
                    z_score(est.variance, var, est.variance_se),
                );
                v.mean = Some(est.variance);
                v.se = Some(est.variance_se);
                tests.push(v);
            }
            TestKind::BesselKs => {
                let law = plan.bessel_reference()?;
                let ks = ks_one_sample(&terminal, |y| law.cdf(t_final, y))?;
                let mut e = TestEntry::named("bessel_ks", ks.statistic);
                e.p_value = Some(ks.p_value);
                tests.push(e);
            }
            TestKind::CollisionScan { threshold } => {
                let slot = gap_slot;
                gap_slot += 1;
                let freq = Frequency::from_flags(paths.iter().map(|p| p.gap_hits[slot]));
                let mut e = TestEntry::named("collision_scan", freq.value);
                e.frequency = Some(freq.value);
                e.se = Some(freq.se);
                e.threshold = Some(threshold);
                tests.push(e);
            }
            TestKind::MultipleCollisionScan { threshold } => {
                let min = paths
                    .iter()
                    .map(|p| p.min_window_spread)
                    .fold(f64::INFINITY, f64::min);
                let freq =
                    Frequency::from_flags(paths.iter().map(|p| p.min_window_spread <= threshold));
                let mut e = TestEntry::named("multiple_collision_scan", min);
                e.frequency = Some(freq.value);
                e.se = Some(freq.se);
                e.threshold = Some(threshold);
                tests.push(e);
            }
        }
    }

    Ok(McReport {
        plan_echo: plan.into(),
        seeds: Seeds {
            master_seed: plan.master_seed,
            first_stream: 0,
            last_stream: plan.n_paths as u64 - 1,
        },
        n_paths: paths.len(),
        tests,
        failures,
    })
}

fn z_score(estimate: f64, exact: f64, se: f64) -> f64 {
    if se > 0.0 {
        (estimate - exact) / se
    } else if estimate == exact {
        0.0
    } else {
        f64::INFINITY
    }
}
