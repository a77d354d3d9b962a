//! Fixtures shared by the benchmarks.

use repel_core::{Geometry, SystemSpec};

/// `n` ordered positions with irregular spacing in `[0, n)`.
pub fn line_configuration(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 + 0.3 * ((i * 7919) % 13) as f64 / 13.0).collect()
}

pub fn line_system(n: usize, coupling: f64) -> SystemSpec {
    SystemSpec::new(Geometry::Line, coupling, line_configuration(n)).expect("valid fixture")
}

/// Symmetric `n×n` test matrix, row-major.
pub fn symmetric_matrix(n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5 + if i == j { i as f64 } else { 0.0 };
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        let xs = line_configuration(16);
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
        let a = symmetric_matrix(5);
        assert!((0..5).all(|i| (0..5).all(|j| a[i * 5 + j] == a[j * 5 + i])));
    }
}
