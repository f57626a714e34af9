//! Dense Hermitian oracle for small lattice operators.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Lowest eigenvalue of `K u = λ M u` with diagonal `M`, through the
/// congruent matrix `M^{-1/2} K M^{-1/2}`.
pub fn lowest(k: &[Vec<Complex64>], mass: &[f64]) -> f64 {
    let n = mass.len();
    let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mat = DMatrix::from_fn(n, n, |i, j| k[i][j] * (s[i] * s[j]));
    let eig = SymmetricEigen::new(mat);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}
