//! Simulation and statistical verification for mutually repelling Brownian
//! particles on the line and on the circle.
//!
//! The total spread `S = Σ_j Σ_k (x_j − x_k)²` of `N` particles with
//! coupling `λ` satisfies `S/(2N) ~ BESQ((N − 1)(λN + 1))`; this crate
//! integrates the particle system, evaluates the spread functionals, and
//! compares ensembles against the exact squared Bessel law, an exact
//! random-matrix sampler, and the collision behaviour expected in each
//! coupling regime.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besq;
pub mod error;
pub mod integrate;
pub mod mcstats;
pub mod model;
pub mod observe;
pub mod rmt;
pub mod special;
pub mod sum;

pub use besq::{besq_mean_var, besq_sample, ncx2_cdf, theorem1_dimension, window_dimension, BesqSpec};
pub use error::{Error, Result};
pub use integrate::{
    adaptive_dt, sample_free_exact, simulate_path, step_tamed, uniform_grid, BrownianPath,
    NoiseSource, Scheme, SchemeConfig, TrajectoryRecord,
};
pub use mcstats::{
    collision_frequency, ks_one_sample, ks_two_sample, map_paths, run_ensemble, ExperimentPlan,
    Frequency, KsResult, McReport, MomentEstimate, PlanEcho, Seeds, TestEntry, TestKind, KS_ALPHA,
};
pub use model::{
    drift_circle, drift_identity_residual, drift_line, qv_identity_residual, DriftVector, Geometry,
    PathState, SystemSpec,
};
pub use observe::{
    first_hit, min_gap, spread_circle, spread_total, spread_window, spread_window_circle,
    Functional, ObservableSeries, SubsetWindow,
};
pub use rmt::{jacobi_eigen_symmetric, sample_goe_eigenvalues, MatrixEnsembleSpec};
