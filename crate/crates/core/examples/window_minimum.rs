//! Lower tail of the grid minimum of `S` for three particles at λ = 0.1,
//! from the integrator and from an exact squared Bessel transition chain on
//! the same grid.
//!
//! `cargo run --release -p repel-core --example window_minimum [paths]`

use rayon::prelude::*;
use repel_core::mcstats::map_paths;
use repel_core::{
    besq_sample, spread_total, uniform_grid, BesqSpec, ExperimentPlan, Geometry, NoiseSource, ObservableSeries,
    SchemeConfig, SystemSpec,
};

const GRID: usize = 1000;

fn report(label: &str, mins: &[f64]) {
    let m = mins.len() as f64;
    let below = |a: f64| mins.iter().filter(|&&x| x < a).count() as f64 / m;
    println!(
        "{label:>12}: P(min S < 1e-5) {:.2e}  < 1e-4 {:.2e}  < 1e-3 {:.2e}  < 1e-2 {:.3}",
        below(1e-5),
        below(1e-4),
        below(1e-3),
        below(1e-2)
    );
}

fn main() {
    let paths: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let x0 = vec![0.0, 0.1, 0.2];
    let spec = SystemSpec::new(Geometry::Line, 0.1, x0.clone()).unwrap();
    let law = BesqSpec::for_system(3, 0.1, spread_total(&x0)).unwrap();
    let dt = 1.0 / GRID as f64;

    let exact: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = NoiseSource::new(0xe1, i).rng();
            let (mut y, mut lo) = (law.start, f64::INFINITY);
            for _ in 0..GRID {
                y = besq_sample(&BesqSpec::new(law.dimension, y).unwrap(), dt, &mut rng);
                lo = lo.min(6.0 * y);
            }
            lo
        })
        .collect();
    report("exact chain", &exact);

    let plan = ExperimentPlan {
        spec,
        cfg: SchemeConfig::default(),
        t_end: 1.0,
        grid: uniform_grid(1.0, GRID),
        n_paths: paths,
        master_seed: 0xe2,
        tests: vec![],
    };
    let simulated: Vec<f64> = map_paths(&plan, |r| {
        Ok(ObservableSeries::from_record(r, &[])?
            .s_total
            .iter()
            .fold(f64::INFINITY, |m, &s| m.min(s)))
    })
    .unwrap()
    .into_iter()
    .map(Result::unwrap)
    .collect();
    report("integrator", &simulated);
}
