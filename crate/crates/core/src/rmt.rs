//! Exact fixed-time oracle for `λ = 1/2`: the spectrum of `diag(x_0)` plus a
//! real symmetric Gaussian matrix.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::integrate::NoiseSource;
use crate::model::MIN_PARTICLES;

pub const MAX_JACOBI_DIM: usize = 64;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEnsembleSpec {
    initial_diagonal: Vec<f64>,
    time: f64,
}

impl MatrixEnsembleSpec {
    pub fn new(initial_diagonal: Vec<f64>, time: f64) -> Result<Self> {
        let n = initial_diagonal.len();
        if !(MIN_PARTICLES..=MAX_JACOBI_DIM).contains(&n) {
            return config_err(format!("matrix size must be in 3..=64 (got {n})"));
        }
        if initial_diagonal.windows(2).any(|w| !(w[0] <= w[1])) {
            return config_err("initial diagonal must be ordered");
        }
        if !(time > 0.0 && time.is_finite()) {
            return config_err("time must be > 0");
        }
        Ok(Self {
            initial_diagonal,
            time,
        })
    }

    pub fn n(&self) -> usize {
        self.initial_diagonal.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn initial_diagonal(&self) -> &[f64] {
        &self.initial_diagonal
    }
}

/// Ascending eigenvalues of `diag(x_0) + G`, with `G` symmetric Gaussian:
/// variance `t` on the diagonal and `t/2` off it.
pub fn sample_goe_eigenvalues(spec: &MatrixEnsembleSpec, noise: NoiseSource) -> Result<Vec<f64>> {
    let n = spec.n();
    let mut rng = noise.rng();
    let diag_sd = spec.time.sqrt();
    let off_sd = (0.5 * spec.time).sqrt();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        a[i * n + i] = spec.initial_diagonal[i] + diag_sd * z;
        for j in (i + 1)..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            a[i * n + j] = off_sd * z;
            a[j * n + i] = off_sd * z;
        }
    }
    jacobi_eigen_symmetric(&a, n)
}

/// Ascending eigenvalues of the symmetric row-major `n × n` matrix `a`.
pub fn jacobi_eigen_symmetric(a: &[f64], n: usize) -> Result<Vec<f64>> {
    Ok(jacobi(a, n, false)?.0)
}

/// Eigenvalues (ascending) and the matching eigenvectors, stored row-major
/// with eigenvector `k` in column `k`.
pub fn jacobi_eigen_decomposition(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (values, vectors) = jacobi(a, n, true)?;
    Ok((values, vectors.expect("vectors requested")))
}

fn jacobi(input: &[f64], n: usize, want_vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if input.len() != n * n {
        return config_err(format!("expected {} entries for a {n}x{n} matrix", n * n));
    }
    if n > MAX_JACOBI_DIM {
        return config_err(format!("matrix size {n} exceeds {MAX_JACOBI_DIM}"));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if input[i * n + j] != input[j * n + i] {
                return config_err("matrix is not symmetric");
            }
        }
    }
    let mut a = input.to_vec();
    let mut v = want_vectors.then(|| {
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        id
    });

    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tolerance = 1e-12 * norm;
    let off_norm = |a: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) <= tolerance;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::EigenFailure { sweeps });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        sweeps += 1;
        converged = off_norm(&a) <= tolerance;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = v.map(|v| {
        let mut sorted = vec![0.0; n * n];
        for (col, &src) in order.iter().enumerate() {
            for row in 0..n {
                sorted[row * n + col] = v[row * n + src];
            }
        }
        sorted
    });
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        a
    }

    #[test]
    fn diagonal_and_two_by_two() {
        let a = [3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0];
        assert_eq!(jacobi_eigen_symmetric(&a, 3).unwrap(), vec![-1.0, 2.0, 3.0]);
        let b = [0.0, 1.0, 1.0, 0.0];
        let ev = jacobi_eigen_symmetric(&b, 2).unwrap();
        assert_abs_diff_eq!(ev[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ev[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn trace_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[3, 5, 10, 24, 64] {
            let a = random_symmetric(n, &mut rng);
            let (vals, vecs) = jacobi_eigen_decomposition(&a, n).unwrap();
            let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
            let sum: f64 = vals.iter().sum();
            assert!((sum - trace).abs() <= 1e-12 * trace.abs().max(1.0), "n={n}");
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));

            let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut resid = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let rec: f64 = (0..n).map(|k| vecs[i * n + k] * vals[k] * vecs[j * n + k]).sum();
                    resid += (a[i * n + j] - rec).powi(2);
                }
            }
            assert!(resid.sqrt() <= 1e-10 * norm, "n={n} residual {}", resid.sqrt());
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let a = random_symmetric(n, &mut rng);
        let perm = [3, 0, 5, 1, 4, 2];
        let mut b = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                b[i * n + j] = a[perm[i] * n + perm[j]];
            }
        }
        let ea = jacobi_eigen_symmetric(&a, n).unwrap();
        let eb = jacobi_eigen_symmetric(&b, n).unwrap();
        for (x, y) in ea.iter().zip(&eb) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(jacobi_eigen_symmetric(&[1.0, 2.0, 3.0, 4.0], 2).is_err());
        assert!(jacobi_eigen_symmetric(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(MatrixEnsembleSpec::new(vec![0.0, 1.0], 1.0).is_err());
        assert!(MatrixEnsembleSpec::new(vec![0.0, 2.0, 1.0], 1.0).is_err());
        assert!(MatrixEnsembleSpec::new(vec![0.0, 1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn small_time_recovers_diagonal() {
        let spec = MatrixEnsembleSpec::new(vec![-1.0, 0.0, 1.0], 1e-10).unwrap();
        let ev = sample_goe_eigenvalues(&spec, NoiseSource::new(8, 0)).unwrap();
        for (e, x) in ev.iter().zip(spec.initial_diagonal()) {
            assert!((e - x).abs() < 1e-4);
        }
    }
}
