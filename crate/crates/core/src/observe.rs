//! Spread functionals, gaps and threshold-crossing detection.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::TrajectoryRecord;
use crate::model::Geometry;

/// Consecutive index block `{q, …, q + r − 1}` (1-based).
///
/// On the circle the block may wrap past `N` back to particle 1; see
/// [`SubsetWindow::cyclic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubsetWindow {
    q: usize,
    r: usize,
}

impl SubsetWindow {
    pub fn new(q: usize, r: usize, n: usize) -> Result<Self> {
        if r < 3 || r > n || q < 1 || q + r - 1 > n {
            return Err(Error::WindowOutOfRange { q, r, n });
        }
        Ok(Self { q, r })
    }

    /// A block that may wrap around the circle.
    pub fn cyclic(q: usize, r: usize, n: usize) -> Result<Self> {
        if r < 3 || r > n || q < 1 || q > n {
            return Err(Error::WindowOutOfRange { q, r, n });
        }
        Ok(Self { q, r })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn wraps(&self, n: usize) -> bool {
        self.q + self.r - 1 > n
    }

    /// All windows of size `r` for `n` particles: `n − r + 1` blocks on the
    /// line, `n` cyclic blocks on the circle.
    pub fn all(geometry: Geometry, n: usize, r: usize) -> Result<Vec<Self>> {
        match geometry {
            Geometry::Line => (1..=n.saturating_sub(r) + 1)
                .map(|q| Self::new(q, r, n))
                .collect(),
            Geometry::Circle => (1..=n).map(|q| Self::cyclic(q, r, n)).collect(),
        }
    }
}

fn pair_square_sum(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut total = 0.0;
    let mut rest = xs.clone();
    for a in xs {
        rest.next();
        for b in rest.clone() {
            let d = a - b;
            total += d * d;
        }
    }
    2.0 * total
}

/// `Σ_j Σ_k (x_j − x_k)²`, both orders of every pair counted.
pub fn spread_total(positions: &[f64]) -> f64 {
    pair_square_sum(positions.iter().copied())
}

/// Total spread restricted to the particles of `window`.
pub fn spread_window(positions: &[f64], window: SubsetWindow) -> Result<f64> {
    let n = positions.len();
    let w = SubsetWindow::new(window.q, window.r, n)?;
    Ok(spread_total(&positions[w.q - 1..w.q - 1 + w.r]))
}

/// Window spread on angular differences. Wrapped members are lifted by
/// `2π` so the block is contiguous on the real line.
pub fn spread_window_circle(positions: &[f64], window: SubsetWindow) -> Result<f64> {
    let n = positions.len();
    let w = SubsetWindow::cyclic(window.q, window.r, n)?;
    let lifted = (0..w.r).map(|k| {
        let idx = w.q - 1 + k;
        if idx >= n {
            positions[idx - n] + TAU
        } else {
            positions[idx]
        }
    });
    Ok(pair_square_sum(lifted))
}

/// `Σ_j Σ_k sin²((x_j − x_k)/2)`.
pub fn spread_circle(positions: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &a) in positions.iter().enumerate() {
        for &b in &positions[i + 1..] {
            let s = (0.5 * (a - b)).sin();
            total += s * s;
        }
    }
    2.0 * total
}

/// Smallest distance between neighbours; on the circle the wrap gap
/// `x_1 + 2π − x_N` is included.
pub fn min_gap(positions: &[f64], geometry: Geometry) -> f64 {
    let inner = positions
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    match geometry {
        Geometry::Line => inner,
        Geometry::Circle => {
            let wrap = positions[0] + TAU - positions[positions.len() - 1];
            inner.min(wrap)
        }
    }
}

/// Observables of one trajectory, sampled on its output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub s_total: Vec<f64>,
    pub s_windows: BTreeMap<SubsetWindow, Vec<f64>>,
    pub r_circ: Option<Vec<f64>>,
    pub min_gap: Vec<f64>,
}

impl ObservableSeries {
    /// Evaluates every functional on the recorded states of `record`,
    /// tracking windows of the given sizes.
    pub fn from_record(record: &TrajectoryRecord, window_sizes: &[usize]) -> Result<Self> {
        let n = record.n_particles();
        let geometry = record.geometry;
        let mut windows = Vec::new();
        for &r in window_sizes {
            windows.extend(SubsetWindow::all(geometry, n, r)?);
        }
        let mut s_windows: BTreeMap<SubsetWindow, Vec<f64>> =
            windows.iter().map(|&w| (w, Vec::new())).collect();
        for xs in &record.positions {
            for (&w, series) in s_windows.iter_mut() {
                let v = match geometry {
                    Geometry::Line => spread_window(xs, w)?,
                    Geometry::Circle => spread_window_circle(xs, w)?,
                };
                series.push(v);
            }
        }
        Ok(Self {
            times: record.times.clone(),
            s_total: record.positions.iter().map(|x| spread_total(x)).collect(),
            s_windows,
            r_circ: (geometry == Geometry::Circle)
                .then(|| record.positions.iter().map(|x| spread_circle(x)).collect()),
            min_gap: record
                .positions
                .iter()
                .map(|x| min_gap(x, geometry))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Smallest value over all tracked windows and grid times.
    pub fn min_window_spread(&self) -> Option<f64> {
        self.s_windows
            .values()
            .flatten()
            .copied()
            .reduce(f64::min)
    }

    fn functional(&self, functional: Functional) -> Option<&[f64]> {
        match functional {
            Functional::MinGap => Some(&self.min_gap),
            Functional::WindowSpread(w) => self.s_windows.get(&w).map(Vec::as_slice),
        }
    }
}

/// Quantity scanned by [`first_hit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Functional {
    MinGap,
    WindowSpread(SubsetWindow),
}

/// Earliest grid time at which `functional` is at or below `threshold`.
///
/// Windows that are not tracked by `series` never hit.
pub fn first_hit(series: &ObservableSeries, functional: Functional, threshold: f64) -> Option<f64> {
    let values = series.functional(functional)?;
    values
        .iter()
        .position(|&v| v <= threshold)
        .map(|i| series.times[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn spreads_by_hand() {
        assert_eq!(spread_total(&[0.0, 1.0, 2.0]), 12.0);
        assert_eq!(spread_total(&[0.1; 4]), 0.0);
        assert_eq!(spread_total(&[3.0, 0.5, 0.5, 0.5]), 2.0 * 3.0 * 6.25);
        let w = SubsetWindow::new(1, 3, 4).unwrap();
        assert_eq!(spread_window(&[0.0, 1.0, 2.0, 10.0], w).unwrap(), 12.0);
        let full = SubsetWindow::new(1, 4, 4).unwrap();
        let xs = [0.0, 1.5, 2.0, 10.0];
        assert_eq!(spread_window(&xs, full).unwrap(), spread_total(&xs));
        let flat = SubsetWindow::new(2, 3, 5).unwrap();
        assert_eq!(spread_window(&[-9.0, 1.0, 1.0, 1.0, 7.0], flat).unwrap(), 0.0);
    }

    #[test]
    fn window_validation() {
        assert!(SubsetWindow::new(2, 3, 3).is_err());
        assert!(SubsetWindow::new(1, 2, 3).is_err());
        assert!(SubsetWindow::new(0, 3, 3).is_err());
        assert!(SubsetWindow::cyclic(3, 3, 3).is_ok());
        assert_eq!(SubsetWindow::all(Geometry::Line, 6, 3).unwrap().len(), 4);
        assert_eq!(SubsetWindow::all(Geometry::Circle, 6, 3).unwrap().len(), 6);
        let wrapped = SubsetWindow::cyclic(3, 3, 4).unwrap();
        assert!(matches!(
            spread_window(&[0.0, 1.0, 2.0, 3.0], wrapped),
            Err(Error::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn circle_window_lifts_wrapped_members() {
        // particles 3, 4 near 2π and particle 1 just past 0 form a tight arc
        let xs = [0.01, 2.0, TAU - 0.02, TAU - 0.01];
        let w = SubsetWindow::cyclic(3, 3, 4).unwrap();
        let expected = spread_total(&[TAU - 0.02, TAU - 0.01, TAU + 0.01]);
        assert_abs_diff_eq!(spread_window_circle(&xs, w).unwrap(), expected, epsilon = 1e-15);
        assert!(expected < 3e-3);
    }

    #[test]
    fn circular_spread_by_hand() {
        let xs = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
        assert_abs_diff_eq!(spread_circle(&xs), 4.5, epsilon = 1e-14);
        assert_eq!(spread_circle(&[1.0; 3]), 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.7).collect();
        assert_abs_diff_eq!(spread_circle(&shifted), 4.5, epsilon = 1e-14);
        let mut lifted = xs;
        lifted[0] += TAU;
        assert_abs_diff_eq!(spread_circle(&lifted), 4.5, epsilon = 1e-14);
    }

    #[test]
    fn gaps() {
        assert_eq!(min_gap(&[0.0, 1.0, 3.0], Geometry::Line), 1.0);
        assert_abs_diff_eq!(
            min_gap(&[0.0, PI / 2.0, PI], Geometry::Circle),
            PI / 2.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            min_gap(&[0.5, 2.0, TAU + 0.4], Geometry::Circle),
            0.1,
            epsilon = 1e-12
        );
        assert_eq!(min_gap(&[0.0, 2.0, 2.0], Geometry::Line), 0.0);
    }

    fn toy_series(gaps: Vec<f64>) -> ObservableSeries {
        let len = gaps.len();
        ObservableSeries {
            times: (1..=len).map(|k| k as f64 * 0.1).collect(),
            s_total: vec![1.0; len],
            s_windows: BTreeMap::new(),
            r_circ: None,
            min_gap: gaps,
        }
    }

    #[test]
    fn first_hit_scans_in_time_order() {
        let s = toy_series(vec![0.5, 0.2, 0.1, 0.3]);
        assert_eq!(first_hit(&s, Functional::MinGap, 1e-3), None);
        let s = toy_series(vec![0.5, 0.2, 0.0, 0.3, 0.0]);
        assert_eq!(first_hit(&s, Functional::MinGap, 0.0), Some(s.times[2]));

        let decreasing: Vec<f64> = (0..50).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let s = toy_series(decreasing.clone());
        let threshold = 0.031;
        let oracle = decreasing.iter().position(|&v| v <= threshold).unwrap();
        assert_eq!(oracle, 32);
        assert_eq!(first_hit(&s, Functional::MinGap, threshold), Some(s.times[oracle]));

        let untracked = Functional::WindowSpread(SubsetWindow::new(1, 3, 3).unwrap());
        assert_eq!(first_hit(&s, untracked, 1.0), None);
    }
}
