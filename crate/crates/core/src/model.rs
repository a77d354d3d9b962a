//! Particle-system types and the singular pair drifts for both geometries.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::sum::NeumaierSum;


/// Smallest system the collision theory is stated for.
pub const MIN_PARTICLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Line,
    /// Angles in radians; the representation is `x_1 <= ... <= x_N <= x_1 + 2π`
    /// with `x_1` in `[0, 2π)`.
    Circle,
}

/// Geometry, particle count, coupling and starting configuration of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    geometry: Geometry,
    coupling: f64,
    initial_positions: Vec<f64>,
}

impl SystemSpec {
    pub fn new(geometry: Geometry, coupling: f64, initial_positions: Vec<f64>) -> Result<Self> {
        if !(coupling > 0.0) || !coupling.is_finite() {
            return config_err(format!("lambda must be > 0 (got {coupling})"));
        }
        Self::build(geometry, coupling, initial_positions)
    }

    /// The non-interacting reference system (`λ = 0`) on the line.
    pub fn free_reference(initial_positions: Vec<f64>) -> Result<Self> {
        Self::build(Geometry::Line, 0.0, initial_positions)
    }

    fn build(geometry: Geometry, coupling: f64, initial_positions: Vec<f64>) -> Result<Self> {
        let n = initial_positions.len();
        if n < MIN_PARTICLES {
            return config_err(format!("N must be >= {MIN_PARTICLES} (got {n})"));
        }
        check_ordering(geometry, &initial_positions)?;
        Ok(Self {
            geometry,
            coupling,
            initial_positions,
        })
    }

    /// `n` particles with constant spacing `gap`, starting at `start`.
    pub fn evenly_spaced(
        geometry: Geometry,
        coupling: f64,
        n: usize,
        start: f64,
        gap: f64,
    ) -> Result<Self> {
        let xs = (0..n).map(|i| start + gap * i as f64).collect();
        Self::new(geometry, coupling, xs)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn n_particles(&self) -> usize {
        self.initial_positions.len()
    }

    pub fn initial_positions(&self) -> &[f64] {
        &self.initial_positions
    }

    /// Pair drift for this system's geometry and coupling.
    pub fn drift(&self, positions: &[f64]) -> Result<DriftVector> {
        match self.geometry {
            Geometry::Line => drift_line(positions, self.coupling),
            Geometry::Circle => drift_circle(positions, self.coupling),
        }
    }
}

/// Checks the ordering invariant of `geometry` (weak ordering; ties allowed).
pub fn check_ordering(geometry: Geometry, positions: &[f64]) -> Result<()> {
    if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
        return config_err(format!("position {} is not finite", i + 1));
    }
    if let Some(i) = positions.windows(2).position(|w| w[0] > w[1]) {
        return config_err(format!(
            "positions must be nondecreasing (x{} > x{})",
            i + 1,
            i + 2
        ));
    }
    if geometry == Geometry::Circle {
        let (first, last) = (positions[0], positions[positions.len() - 1]);
        if !(0.0..TAU).contains(&first) {
            return config_err("circle positions need x1 in [0, 2pi)");
        }
        if last > first + TAU {
            return config_err("circle positions need xN <= x1 + 2pi");
        }
    }
    Ok(())
}

/// Maps arbitrary angles onto the canonical circle representation.
pub fn circle_representative(positions: &mut [f64]) {
    for x in positions.iter_mut() {
        *x = x.rem_euclid(TAU);
        // rem_euclid can round up to exactly TAU for tiny negative inputs
        if *x >= TAU {
            *x = 0.0;
        }
    }
    positions.sort_by(f64::total_cmp);
}

/// Time and positions of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub time: f64,
    pub positions: Vec<f64>,
}

impl PathState {
    pub fn new(time: f64, positions: Vec<f64>) -> Self {
        Self { time, positions }
    }

    pub fn initial(spec: &SystemSpec) -> Self {
        Self::new(0.0, spec.initial_positions.clone())
    }
}

/// Drift per particle. Components sum to zero up to round-off.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftVector(pub Vec<f64>);

impl DriftVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn pair_drift_into(
    positions: &[f64],
    scale: f64,
    kernel: impl Fn(f64) -> f64,
    is_tie: impl Fn(f64) -> bool,
    out: &mut [f64],
    comp: &mut [f64],
) -> Result<()> {
    let n = positions.len();
    debug_assert!(out.len() == n && comp.len() == n);
    out.fill(0.0);
    comp.fill(0.0);
    // per-component Neumaier accumulation
    let mut add = |k: usize, v: f64| {
        let t = out[k] + v;
        if out[k].abs() >= v.abs() {
            comp[k] += (out[k] - t) + v;
        } else {
            comp[k] += (v - t) + out[k];
        }
        out[k] = t;
    };
    for i in 0..n {
        for j in (i + 1)..n {
            let d = positions[i] - positions[j];
            if is_tie(d) {
                return Err(Error::DuplicatePosition {
                    first: i,
                    second: j,
                });
            }
            let v = kernel(d);
            add(i, v);
            add(j, -v);
        }
    }
    for (o, c) in out.iter_mut().zip(comp.iter()) {
        *o = scale * (*o + c);
    }
    Ok(())
}

fn line_kernel(d: f64) -> f64 {
    1.0 / d
}

fn circle_kernel(d: f64) -> f64 {
    let half = 0.5 * d;
    half.cos() / half.sin()
}

fn circle_tie(d: f64) -> bool {
    d == 0.0 || d.abs() == TAU
}

/// Writes the drift of `geometry` into `out`, using `scratch` (same length)
/// for compensation terms.
pub fn drift_into(
    geometry: Geometry,
    positions: &[f64],
    coupling: f64,
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    match geometry {
        Geometry::Line => {
            pair_drift_into(positions, coupling, line_kernel, |d| d == 0.0, out, scratch)
        }
        Geometry::Circle => pair_drift_into(
            positions,
            0.5 * coupling,
            circle_kernel,
            circle_tie,
            out,
            scratch,
        ),
    }
}

fn allocating_drift(geometry: Geometry, positions: &[f64], coupling: f64) -> Result<DriftVector> {
    let mut out = vec![0.0; positions.len()];
    let mut scratch = vec![0.0; positions.len()];
    drift_into(geometry, positions, coupling, &mut out, &mut scratch)?;
    Ok(DriftVector(out))
}

/// `λ Σ_{j≠i} 1/(x_i − x_j)` for every particle.
pub fn drift_line(positions: &[f64], coupling: f64) -> Result<DriftVector> {
    allocating_drift(Geometry::Line, positions, coupling)
}

/// `(λ/2) Σ_{j≠i} cot((x_i − x_j)/2)` for every particle.
///
/// Differences are used unreduced: `cot(d/2)` is `2π`-periodic in `d`, so the
/// lifted representation gives the same value as the wrapped angle.
pub fn drift_circle(positions: &[f64], coupling: f64) -> Result<DriftVector> {
    allocating_drift(Geometry::Circle, positions, coupling)
}

/// Gap between `Σ_j (Σ_k (x_j − x_k))²` and `(N/2) Σ_j Σ_k (x_j − x_k)²`.
///
/// The two sides agree for every configuration; this is the quadratic
/// variation of the martingale part of the total spread.
pub fn qv_identity_residual(positions: &[f64]) -> f64 {
    let n = positions.len();
    let mut lhs = NeumaierSum::new();
    let mut spread = NeumaierSum::new();
    for &xj in positions {
        let mut row = NeumaierSum::new();
        for &xk in positions {
            let d = xj - xk;
            row.add(d);
            spread.add(d * d);
        }
        let c = row.value();
        lhs.add(c * c);
    }
    (lhs.value() - 0.5 * n as f64 * spread.value()).abs()
}

/// Gap between `Σ_{j,k} Σ_{l≠j} (x_j − x_k)/(x_j − x_l)` and `N²(N−1)/2`.
///
/// Evaluated in factored form `Σ_j (Σ_k (x_j − x_k)) (Σ_{l≠j} 1/(x_j − x_l))`.
pub fn drift_identity_residual(positions: &[f64]) -> Result<f64> {
    let n = positions.len();
    let inverse_sums = drift_line(positions, 1.0)?;
    let mut total = NeumaierSum::new();
    for (j, &xj) in positions.iter().enumerate() {
        let mut row = NeumaierSum::new();
        for &xk in positions {
            row.add(xj - xk);
        }
        total.add(row.value() * inverse_sums.0[j]);
    }
    let nf = n as f64;
    Ok((total.value() - 0.5 * nf * nf * (nf - 1.0)).abs())
}
