//! Time stepping for both geometries.
//!
//! The interacting system is advanced by a gap-adaptive, tamed
//! Euler–Maruyama scheme followed by an ordering repair. The free system
//! (`λ = 0`) has an exact sampler that needs no discretization.

mod noise;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use noise::{BrownianPath, NoiseSource, MAX_LEVEL};

use crate::error::{config_err, Error, Result};
use crate::model::{circle_representative, check_ordering, Geometry, PathState, SystemSpec};
use crate::observe::min_gap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact Gaussian transitions of the non-interacting system.
    ExactFree,
    TamedEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt_max: f64,
    pub dt_min: f64,
    /// Step is `gap_safety · min_gap²` before clamping.
    pub gap_safety: f64,
    pub taming: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::TamedEuler,
            dt_max: 1e-4,
            dt_min: 1e-8,
            gap_safety: 0.02,
            taming: true,
        }
    }
}

impl SchemeConfig {
    pub fn with_dt_max(mut self, dt_max: f64) -> Self {
        self.dt_max = dt_max;
        self
    }

    pub fn exact_free() -> Self {
        Self {
            scheme: Scheme::ExactFree,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return config_err("dt_max must be > 0");
        }
        if !(self.dt_min > 0.0) {
            return config_err("dt_min must be > 0");
        }
        if self.dt_min > self.dt_max {
            return config_err("dt_min must be <= dt_max");
        }
        if !(self.gap_safety > 0.0 && self.gap_safety <= 1.0) {
            return config_err("gap_safety must be in (0, 1]");
        }
        Ok(())
    }
}

/// `clamp(α · min_gap², dt_min, dt_max)`.
pub fn adaptive_dt(min_gap: f64, cfg: &SchemeConfig) -> f64 {
    let raw = cfg.gap_safety * min_gap * min_gap;
    if raw.is_nan() {
        return cfg.dt_min;
    }
    raw.clamp(cfg.dt_min, cfg.dt_max)
}

/// Scales the whole drift by `1 / (1 + h‖b‖∞)`, keeping its zero sum.
pub fn tame(drift: &mut [f64], h: f64) {
    let sup = drift.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let factor = 1.0 / (1.0 + h * sup);
    for b in drift.iter_mut() {
        *b *= factor;
    }
}

fn repair_ordering(geometry: Geometry, positions: &mut [f64]) {
    match geometry {
        Geometry::Line => positions.sort_by(f64::total_cmp),
        Geometry::Circle => circle_representative(positions),
    }
}

/// Reusable buffers for repeated stepping.
#[derive(Debug, Clone, Default)]
pub struct StepScratch {
    drift: Vec<f64>,
    comp: Vec<f64>,
}

impl StepScratch {
    pub fn new(n: usize) -> Self {
        Self {
            drift: vec![0.0; n],
            comp: vec![0.0; n],
        }
    }
}

/// [`step_tamed`] on a position buffer. Returns the new time.
pub fn step_in_place(
    positions: &mut [f64],
    spec: &SystemSpec,
    cfg: &SchemeConfig,
    noise: &mut BrownianPath,
    scratch: &mut StepScratch,
) -> Result<f64> {
    let n = positions.len();
    if scratch.drift.len() != n {
        *scratch = StepScratch::new(n);
    }
    let gap = min_gap(positions, spec.geometry());
    let level = noise.level_for(adaptive_dt(gap, cfg));
    let h = noise.step_len(level);
    crate::model::drift_into(
        spec.geometry(),
        positions,
        spec.coupling(),
        &mut scratch.drift,
        &mut scratch.comp,
    )?;
    if cfg.taming {
        tame(&mut scratch.drift, h);
    }
    let dw = noise.advance(level);
    let mut finite = true;
    for ((x, b), w) in positions.iter_mut().zip(&scratch.drift).zip(dw) {
        *x += h * b + w;
        finite &= x.is_finite();
    }
    let time = noise.time();
    if !finite {
        return Err(Error::NonFinite { time });
    }
    repair_ordering(spec.geometry(), positions);
    Ok(time)
}

/// One tamed Euler–Maruyama step, with the Brownian increment taken from
/// `noise` over the next dyadic interval.
///
/// The step length is the largest dyadic fraction of the noise horizon that
/// does not exceed [`adaptive_dt`] and starts on the current clock.
pub fn step_tamed(
    state: &PathState,
    spec: &SystemSpec,
    cfg: &SchemeConfig,
    noise: &mut BrownianPath,
) -> Result<PathState> {
    debug_assert!((state.time - noise.time()).abs() <= 1e-12 * noise.horizon().max(1.0));
    let mut next = state.positions.clone();
    let mut scratch = StepScratch::new(next.len());
    let time = step_in_place(&mut next, spec, cfg, noise, &mut scratch)?;
    Ok(PathState::new(time, next))
}

/// Pulls exactly tied coordinates apart by a symmetric fan of spacing `eps`.
pub fn separate_ties(geometry: Geometry, positions: &mut [f64], eps: f64) {
    repair_ordering(geometry, positions);
    // a fan can land on a neighbour; a few passes settle any realistic input
    for _ in 0..8 {
        let mut changed = false;
        let mut i = 0;
        while i < positions.len() {
            let mut j = i + 1;
            while j < positions.len() && positions[j] == positions[i] {
                j += 1;
            }
            let group = j - i;
            if group > 1 {
                let centre = positions[i];
                for k in 0..group {
                    positions[i + k] = centre + (k as f64 - 0.5 * (group - 1) as f64) * eps;
                }
                changed = true;
            }
            i = j;
        }
        if geometry == Geometry::Circle {
            let n = positions.len();
            if n > 1 && positions[0] + std::f64::consts::TAU == positions[n - 1] {
                positions[n - 1] -= eps;
                changed = true;
            }
        }
        repair_ordering(geometry, positions);
        if !changed {
            break;
        }
    }
}

/// Positions of one path on an output grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub geometry: Geometry,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    /// Number of integrator steps taken.
    pub steps: u64,
    /// Smallest neighbour gap over every visited state, not only grid states.
    pub path_min_gap: f64,
}

impl TrajectoryRecord {
    pub fn n_particles(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_grid(grid: &[f64], t_end: f64) -> Result<()> {
    if grid.is_empty() {
        return config_err("output grid is empty");
    }
    if grid[0] < 0.0 || grid.iter().any(|t| !t.is_finite()) {
        return config_err("output grid must contain finite times >= 0");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return config_err("output grid must be strictly increasing");
    }
    if grid[grid.len() - 1] > t_end {
        return config_err("output grid extends past t_end");
    }
    Ok(())
}

/// `count` equally spaced times ending at `t_end`.
pub fn uniform_grid(t_end: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| t_end * k as f64 / count as f64)
        .collect()
}

/// Integrates one path to `t_end` and records the first state at or after
/// each grid time.
pub fn simulate_path(
    spec: &SystemSpec,
    cfg: &SchemeConfig,
    t_end: f64,
    grid: &[f64],
    noise: NoiseSource,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return config_err("t_end must be > 0");
    }
    check_grid(grid, t_end)?;
    match cfg.scheme {
        Scheme::ExactFree => simulate_free(spec, grid, noise),
        Scheme::TamedEuler => simulate_tamed(spec, cfg, t_end, grid, noise),
    }
}

fn simulate_tamed(
    spec: &SystemSpec,
    cfg: &SchemeConfig,
    t_end: f64,
    grid: &[f64],
    noise: NoiseSource,
) -> Result<TrajectoryRecord> {
    let geometry = spec.geometry();
    let mut state = PathState::initial(spec);
    separate_ties(geometry, &mut state.positions, cfg.dt_min);
    let mut brownian = noise.brownian(spec.n_particles(), t_end);

    let mut record = TrajectoryRecord {
        geometry,
        times: Vec::with_capacity(grid.len()),
        positions: Vec::with_capacity(grid.len()),
        steps: 0,
        path_min_gap: min_gap(&state.positions, geometry),
    };
    let mut scratch = StepScratch::new(spec.n_particles());
    let mut next_grid = 0;
    loop {
        while next_grid < grid.len() && grid[next_grid] <= state.time {
            record.times.push(state.time);
            record.positions.push(state.positions.clone());
            next_grid += 1;
        }
        if next_grid == grid.len() || brownian.is_finished() {
            break;
        }
        state.time = step_in_place(&mut state.positions, spec, cfg, &mut brownian, &mut scratch)?;
        record.steps += 1;
        record.path_min_gap = record
            .path_min_gap
            .min(min_gap(&state.positions, geometry));
    }
    debug_assert_eq!(record.times.len(), grid.len());
    Ok(record)
}

fn require_free(spec: &SystemSpec) -> Result<()> {
    if spec.coupling() != 0.0 {
        return config_err("exact free sampling needs lambda = 0");
    }
    if spec.geometry() != Geometry::Line {
        return config_err("exact free sampling is only available on the line");
    }
    Ok(())
}

fn simulate_free(spec: &SystemSpec, grid: &[f64], noise: NoiseSource) -> Result<TrajectoryRecord> {
    require_free(spec)?;
    let mut rng = noise.rng();
    // unordered Brownian coordinates; the ordered system is their sorted image
    let mut free = spec.initial_positions().to_vec();
    let mut now = 0.0;
    let mut record = TrajectoryRecord {
        geometry: Geometry::Line,
        times: Vec::with_capacity(grid.len()),
        positions: Vec::with_capacity(grid.len()),
        steps: 0,
        path_min_gap: min_gap(spec.initial_positions(), Geometry::Line),
    };
    for &t in grid {
        let sd = (t - now).sqrt();
        if sd > 0.0 {
            for x in free.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += sd * z;
            }
            record.steps += 1;
        }
        now = t;
        let mut sorted = free.clone();
        sorted.sort_by(f64::total_cmp);
        record.path_min_gap = record.path_min_gap.min(min_gap(&sorted, Geometry::Line));
        record.times.push(t);
        record.positions.push(sorted);
    }
    Ok(record)
}

/// Exact draw of the free ordered system at time `t`: `sort(x_0 + √t ξ)`.
pub fn sample_free_exact(spec: &SystemSpec, t: f64, noise: NoiseSource) -> Result<PathState> {
    require_free(spec)?;
    if !(t >= 0.0) {
        return config_err("t must be >= 0");
    }
    let mut rng = noise.rng();
    let sd = t.sqrt();
    let mut positions: Vec<f64> = spec
        .initial_positions()
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(&mut rng);
            x + sd * z
        })
        .collect();
    positions.sort_by(f64::total_cmp);
    Ok(PathState::new(t, positions))
}

/// Checks the ordering invariant of a recorded state.
pub fn check_state(geometry: Geometry, state: &[f64]) -> Result<()> {
    check_ordering(geometry, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn adaptive_dt_clamps() {
        let cfg = SchemeConfig {
            dt_max: 1e-3,
            dt_min: 1e-8,
            gap_safety: 0.1,
            ..SchemeConfig::default()
        };
        assert_abs_diff_eq!(adaptive_dt(0.01, &cfg), 1e-5, epsilon = 1e-20);
        assert_eq!(adaptive_dt(1e6, &cfg), 1e-3);
        assert_eq!(adaptive_dt(0.0, &cfg), 1e-8);
    }

    #[test]
    fn taming_scales_by_sup_norm() {
        let mut b = vec![-4.0 / 3.0, 0.5, 5.0 / 6.0];
        tame(&mut b, 0.1);
        let factor = 1.0 / (1.0 + 0.1 * 4.0 / 3.0);
        assert_abs_diff_eq!(factor, 0.882_352_941_176_470_6, epsilon = 1e-15);
        assert_abs_diff_eq!(b[0], -4.0 / 3.0 * factor, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1], 0.5 * factor, epsilon = 1e-15);
        assert_abs_diff_eq!(b[2], 5.0 / 6.0 * factor, epsilon = 1e-15);
        assert!(b.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn free_step_is_gaussian_displacement_then_sort() {
        let spec = SystemSpec::free_reference(vec![0.0, 0.01, 0.02]).unwrap();
        let cfg = SchemeConfig::default();
        let noise = NoiseSource::new(5, 0);
        let mut path = noise.brownian(3, 1.0);
        let mut replay = noise.brownian(3, 1.0);
        let state = PathState::initial(&spec);
        let next = step_tamed(&state, &spec, &cfg, &mut path).unwrap();
        let level = replay.level_for(adaptive_dt(0.01, &cfg));
        let dw = replay.advance(level).to_vec();
        let mut expected: Vec<f64> = state.positions.iter().zip(&dw).map(|(x, w)| x + w).collect();
        expected.sort_by(f64::total_cmp);
        assert_eq!(next.positions, expected);
        assert_eq!(next.time, replay.time());
    }

    #[test]
    fn ties_fan_out_symmetrically() {
        let mut xs = vec![1.0, 1.0, 1.0, 4.0];
        separate_ties(Geometry::Line, &mut xs, 1e-6);
        assert_eq!(xs, vec![1.0 - 1e-6, 1.0, 1.0 + 1e-6, 4.0]);

        let mut xs = vec![0.0, 2.0, std::f64::consts::TAU];
        separate_ties(Geometry::Circle, &mut xs, 1e-6);
        check_ordering(Geometry::Circle, &xs).unwrap();
        assert!(min_gap(&xs, Geometry::Circle) > 0.0);
    }

    #[test]
    fn grid_validation() {
        let spec = SystemSpec::new(Geometry::Line, 1.0, vec![0.0, 1.0, 2.0]).unwrap();
        let cfg = SchemeConfig::default();
        let noise = NoiseSource::new(1, 0);
        assert!(simulate_path(&spec, &cfg, 1.0, &[], noise).is_err());
        assert!(simulate_path(&spec, &cfg, 1.0, &[0.5, 0.2], noise).is_err());
        assert!(simulate_path(&spec, &cfg, 1.0, &[0.5, 1.5], noise).is_err());
        let bad = SchemeConfig {
            dt_min: 1.0,
            ..cfg
        };
        assert!(simulate_path(&spec, &bad, 1.0, &[0.5], noise).is_err());
    }

    #[test]
    fn zero_grid_returns_initial_state() {
        let spec = SystemSpec::new(Geometry::Line, 1.0, vec![0.0, 1.0, 1.0]).unwrap();
        let cfg = SchemeConfig::default();
        let rec = simulate_path(&spec, &cfg, 1.0, &[0.0], NoiseSource::new(1, 0)).unwrap();
        assert_eq!(rec.steps, 0);
        assert_eq!(rec.positions[0], vec![0.0, 1.0 - 0.5e-8, 1.0 + 0.5e-8]);
    }

    #[test]
    fn exact_free_rejects_interacting_specs() {
        let spec = SystemSpec::new(Geometry::Line, 1.0, vec![0.0, 1.0, 2.0]).unwrap();
        assert!(sample_free_exact(&spec, 1.0, NoiseSource::new(1, 0)).is_err());
        let free = SystemSpec::free_reference(vec![0.0, 1.0, 2.0]).unwrap();
        let s = sample_free_exact(&free, 0.0, NoiseSource::new(1, 0)).unwrap();
        assert_eq!(s.positions, vec![0.0, 1.0, 2.0]);
    }
}
