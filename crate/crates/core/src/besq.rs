//! The squared Bessel law that governs the scaled total spread.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MIN_PARTICLES;
use crate::special::{gamma_p, ln_gamma};

/// Dimension `δ` and starting value `y0` of a squared Bessel process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesqSpec {
    pub dimension: f64,
    pub start: f64,
}

impl BesqSpec {
    pub fn new(dimension: f64, start: f64) -> Result<Self> {
        if !(dimension > 0.0 && dimension.is_finite()) {
            return Err(Error::Domain(format!("dimension must be > 0 (got {dimension})")));
        }
        if !(start >= 0.0 && start.is_finite()) {
            return Err(Error::Domain(format!("start must be >= 0 (got {start})")));
        }
        Ok(Self { dimension, start })
    }

    /// Law of `S_t / (2N)` for `n` particles started from `positions`.
    pub fn for_system(n: usize, coupling: f64, initial_spread: f64) -> Result<Self> {
        Self::new(
            theorem1_dimension(n, coupling)?,
            initial_spread / (2.0 * n as f64),
        )
    }

    /// CDF of `Y_t` at `y`.
    pub fn cdf(&self, t: f64, y: f64) -> f64 {
        if t <= 0.0 {
            return if y >= self.start { 1.0 } else { 0.0 };
        }
        ncx2_cdf(y / t, self.dimension, self.start / t).expect("validated spec")
    }
}

/// `(N − 1)(λN + 1)`, the dimension of `S/(2N)`.
pub fn theorem1_dimension(n: usize, coupling: f64) -> Result<f64> {
    if n < MIN_PARTICLES {
        return Err(Error::Domain(format!("N must be >= 3 (got {n})")));
    }
    if !(coupling >= 0.0) {
        return Err(Error::Domain(format!("lambda must be >= 0 (got {coupling})")));
    }
    let n = n as f64;
    Ok((n - 1.0) * (coupling * n + 1.0))
}

/// `(r − 1)(λr + 1)` for a window of `r` consecutive particles.
pub fn window_dimension(r: usize, coupling: f64) -> Result<f64> {
    if r < MIN_PARTICLES {
        return Err(Error::Domain(format!("window size must be >= 3 (got {r})")));
    }
    if !(coupling > 0.0) {
        return Err(Error::Domain(format!("lambda must be > 0 (got {coupling})")));
    }
    let r = r as f64;
    Ok((r - 1.0) * (coupling * r + 1.0))
}

/// Mean `y0 + δt` and variance `4 y0 t + 2δt²` of `Y_t`.
pub fn besq_mean_var(spec: &BesqSpec, t: f64) -> (f64, f64) {
    let mean = spec.start + spec.dimension * t;
    let var = 4.0 * spec.start * t + 2.0 * spec.dimension * t * t;
    (mean, var)
}

/// Exact draw of `Y_t` as a Poisson mixture of gamma laws.
pub fn besq_sample<R: Rng + ?Sized>(spec: &BesqSpec, t: f64, rng: &mut R) -> f64 {
    assert!(t > 0.0, "t must be > 0");
    let rate = spec.start / (2.0 * t);
    let k = if rate > 0.0 {
        Poisson::new(rate).expect("positive rate").sample(rng)
    } else {
        0.0
    };
    Gamma::new(0.5 * spec.dimension + k, 2.0 * t)
        .expect("positive shape")
        .sample(rng)
}

const POISSON_TAIL: f64 = 1e-12;

/// Noncentral chi-square CDF with `dof` degrees of freedom.
pub fn ncx2_cdf(x: f64, dof: f64, noncentrality: f64) -> Result<f64> {
    if !(dof > 0.0) {
        return Err(Error::Domain(format!("degrees of freedom must be > 0 (got {dof})")));
    }
    if !(noncentrality >= 0.0) {
        return Err(Error::Domain(format!(
            "noncentrality must be >= 0 (got {noncentrality})"
        )));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let half_x = 0.5 * x;
    let half_dof = 0.5 * dof;
    if noncentrality == 0.0 {
        return Ok(gamma_p(half_dof, half_x));
    }

    let mu = 0.5 * noncentrality;
    let weight = |k: f64| (-mu + k * mu.ln() - ln_gamma(k + 1.0)).exp();
    let centre = mu.floor();

    let mut mass = weight(centre);
    let mut total = mass * gamma_p(half_dof + centre, half_x);
    let (mut lo, mut hi) = (centre - 1.0, centre + 1.0);
    let (mut lo_w, mut hi_w) = (1.0, 1.0);
    while 1.0 - mass >= POISSON_TAIL {
        let lo_live = lo >= 0.0 && lo_w > 0.0;
        let hi_live = hi_w > 0.0;
        if !lo_live && !hi_live {
            break;
        }
        if lo_live {
            lo_w = weight(lo);
            mass += lo_w;
            total += lo_w * gamma_p(half_dof + lo, half_x);
            lo -= 1.0;
        }
        if hi_live {
            hi_w = weight(hi);
            mass += hi_w;
            total += hi_w * gamma_p(half_dof + hi, half_x);
            hi += 1.0;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}
