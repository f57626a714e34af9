//! Hermitian linear solves and the lowest eigenpair of `K u = λ M u` with a
//! diagonal mass matrix `M`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{mass_dot, zeros, MagneticOperator};

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

/// Solves `(K − σ M) x = rhs` by Jacobi-preconditioned conjugate gradients.
/// `x` holds the initial guess on entry. Returns the iteration count.
pub fn solve_shifted(
    op: &MagneticOperator,
    mass: &[f64],
    shift: f64,
    rhs: &[Complex64],
    x: &mut [Complex64],
    opts: CgOptions,
) -> Result<usize> {
    let n = rhs.len();
    let apply = |v: &[Complex64], out: &mut [Complex64]| {
        op.apply(v, out);
        for ((o, vi), m) in out.iter_mut().zip(v).zip(mass) {
            *o -= vi * (shift * m);
        }
    };
    let inv_diag: Vec<f64> = op.diag.iter().zip(mass).map(|(d, m)| 1.0 / (d - shift * m)).collect();
    let rhs_norm = rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        return Ok(0);
    }
    let mut r = zeros(n);
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let mut z: Vec<Complex64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = zeros(n);
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| (a.conj() * b).re).sum();
    for iter in 0..opts.max_iter {
        let rn = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if rn <= opts.rel_tol * rhs_norm {
            return Ok(iter);
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| (a.conj() * b).re).sum();
        if pap <= 0.0 {
            return Err(Error::LinearNotConverged {
                iterations: iter,
                residual: rn / rhs_norm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| (a.conj() * b).re).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + p[i] * beta;
        }
    }
    let rn = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    Err(Error::LinearNotConverged {
        iterations: opts.max_iter,
        residual: rn / rhs_norm,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Shift strictly below the lowest eigenvalue.
    pub shift: f64,
    /// Target for the residual `‖K u − λ M u‖_{M⁻¹}` with `‖u‖_M = 1`.
    pub tol: f64,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub seed: u64,
    pub cg: CgOptions,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            shift: 0.0,
            tol: 1e-6,
            krylov_dim: 40,
            max_restarts: 20,
            seed: 7,
            cg: CgOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    /// Normalized so that `Σ m |u|² = 1`.
    pub vector: Vec<Complex64>,
    pub residual: f64,
    pub inner_iterations: usize,
}

/// Residual `‖K u − λ M u‖_{M⁻¹}`.
pub fn eigen_residual(op: &MagneticOperator, mass: &[f64], lambda: f64, u: &[Complex64]) -> f64 {
    let mut ku = zeros(u.len());
    op.apply(u, &mut ku);
    ku.iter()
        .zip(u)
        .zip(mass)
        .map(|((k, x), m)| (k - x * (lambda * m)).norm_sqr() / m)
        .sum::<f64>()
        .sqrt()
}

/// Lowest eigenpair by shift-invert Lanczos in the `M` inner product with
/// full reorthogonalization and restarts from the current Ritz vector.
pub fn lowest_eigenpair(
    op: &MagneticOperator,
    mass: &[f64],
    start: Option<&[Complex64]>,
    opts: EigenOptions,
) -> Result<Eigenpair> {
    let n = mass.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v0: Vec<Complex64> = match start {
        Some(s) => s.to_vec(),
        None => (0..n).map(|_| Complex64::new(1.0, 0.0)).collect(),
    };
    // A small random component keeps every symmetry sector represented.
    for v in v0.iter_mut() {
        *v += Complex64::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
    }
    let mut inner = 0usize;
    let mut best: Option<Eigenpair> = None;
    for _restart in 0..=opts.max_restarts {
        let nrm = mass_dot(mass, &v0, &v0).re.sqrt();
        v0.iter_mut().for_each(|v| *v /= nrm);
        let mut basis: Vec<Vec<Complex64>> = vec![v0.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut guess = zeros(n);
        for j in 0..opts.krylov_dim {
            let rhs: Vec<Complex64> = basis[j].iter().zip(mass).map(|(v, m)| v * m).collect();
            guess.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
            inner += solve_shifted(op, mass, opts.shift, &rhs, &mut guess, opts.cg)?;
            let mut w = guess.clone();
            let alpha = mass_dot(mass, &basis[j], &w).re;
            alphas.push(alpha);
            // Two passes of Gram–Schmidt against the whole basis.
            for _ in 0..2 {
                for q in &basis {
                    let c = mass_dot(mass, q, &w);
                    for (wi, qi) in w.iter_mut().zip(q) {
                        *wi -= qi * c;
                    }
                }
            }
            let beta = mass_dot(mass, &w, &w).re.sqrt();
            let (theta, s) = largest_ritz(&alphas, &betas);
            let estimate = (beta * s[j]).abs();
            // Residual in λ: the Ritz residual in T maps to ≈ estimate/θ².
            let converged_estimate = estimate / (theta * theta) < 0.1 * opts.tol;
            if converged_estimate || j + 1 == opts.krylov_dim || beta < 1e-14 {
                let mut u = zeros(n);
                for (coef, q) in s.iter().zip(&basis) {
                    for (ui, qi) in u.iter_mut().zip(q) {
                        *ui += qi * coef;
                    }
                }
                let nrm = mass_dot(mass, &u, &u).re.sqrt();
                u.iter_mut().for_each(|v| *v /= nrm);
                let lambda = op.energy(&u);
                let residual = eigen_residual(op, mass, lambda, &u);
                let pair = Eigenpair {
                    value: lambda,
                    vector: u,
                    residual,
                    inner_iterations: inner,
                };
                if residual <= opts.tol {
                    return Ok(pair);
                }
                let exhausted = j + 1 == opts.krylov_dim || beta < 1e-14;
                if exhausted {
                    v0 = pair.vector.clone();
                    best = Some(pair);
                    break;
                }
                best = Some(pair);
            }
            w.iter_mut().for_each(|v| *v /= beta);
            betas.push(beta);
            basis.push(w);
        }
    }
    let residual = best.as_ref().map(|b| b.residual).unwrap_or(f64::INFINITY);
    Err(Error::EigenNotConverged {
        iterations: inner,
        residual,
    })
}

/// Largest eigenpair of the Lanczos tridiagonal matrix.
fn largest_ritz(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let m = alphas.len();
    let mut a = vec![vec![0.0; m]; m];
    for i in 0..m {
        a[i][i] = alphas[i];
        if i + 1 < m {
            a[i][i + 1] = betas[i];
            a[i + 1][i] = betas[i];
        }
    }
    let (vals, vecs) = jacobi_eigen(a);
    let k = (0..m).max_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap()).unwrap();
    (vals[k], (0..m).map(|i| vecs[i][k]).collect())
}

/// Cyclic Jacobi eigendecomposition of a small dense symmetric matrix.
/// Returns eigenvalues and the matrix whose columns are eigenvectors.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let total: f64 = a.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalizes_small_matrix() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]];
        let (vals, vecs) = jacobi_eigen(a.clone());
        for k in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i][j] * vecs[j][k]).sum();
                assert!((av - vals[k] * vecs[i][k]).abs() < 1e-12);
            }
        }
        let sum: f64 = vals.iter().sum();
        assert!((sum - 9.0).abs() < 1e-12);
    }
}
