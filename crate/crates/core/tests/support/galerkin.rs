//! Trigonometric Galerkin oracles for the 1D fiber problems.
//!
//! Independent of the finite-difference path: the stiffness part is diagonal
//! in a sine/cosine basis and the potential matrix is integrated in closed form.

use nalgebra::{DMatrix, SymmetricEigen};

/// `∫_p^q t^m cos(ω t + c) dt` for `m ∈ {0, 1, 2}`.
fn moment_cos(m: usize, omega: f64, c: f64, p: f64, q: f64) -> f64 {
    if omega == 0.0 {
        let prim = |t: f64| t.powi(m as i32 + 1) / (m as f64 + 1.0);
        return c.cos() * (prim(q) - prim(p));
    }
    let w = omega;
    // cos(ωt + c) = cos c cos ωt - sin c sin ωt
    let ic = |t: f64| -> f64 {
        let (s, co) = (w * t).sin_cos();
        match m {
            0 => s / w,
            1 => t * s / w + co / (w * w),
            _ => t * t * s / w + 2.0 * t * co / (w * w) - 2.0 * s / (w * w * w),
        }
    };
    let is = |t: f64| -> f64 {
        let (s, co) = (w * t).sin_cos();
        match m {
            0 => -co / w,
            1 => -t * co / w + s / (w * w),
            _ => -t * t * co / w + 2.0 * t * s / (w * w) + 2.0 * co / (w * w * w),
        }
    };
    c.cos() * (ic(q) - ic(p)) - c.sin() * (is(q) - is(p))
}

/// `∫_p^q (c2 t² + c1 t + c0) cos(ω t + c) dt`.
fn poly_cos(coef: [f64; 3], omega: f64, c: f64, p: f64, q: f64) -> f64 {
    coef[0] * moment_cos(0, omega, c, p, q)
        + coef[1] * moment_cos(1, omega, c, p, q)
        + coef[2] * moment_cos(2, omega, c, p, q)
}

fn lowest(mat: DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(mat);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Lowest eigenvalue of `-d² + (t - ξ)²` on `(0, L)`, Neumann at 0,
/// Dirichlet at `L`, in the basis `cos((k + ½)π t / L)`.
pub fn degennes(xi: f64, length: f64, modes: usize) -> f64 {
    let omega = |k: usize| (k as f64 + 0.5) * std::f64::consts::PI / length;
    let coef = [xi * xi, -2.0 * xi, 1.0];
    let mut k_mat = DMatrix::zeros(modes, modes);
    for k in 0..modes {
        for l in 0..=k {
            // (2/L) cos cos = (1/L)[cos((ωk-ωl)t) + cos((ωk+ωl)t)]
            let v = (poly_cos(coef, omega(k) - omega(l), 0.0, 0.0, length)
                + poly_cos(coef, omega(k) + omega(l), 0.0, 0.0, length))
                / length;
            k_mat[(k, l)] = v;
            k_mat[(l, k)] = v;
        }
        k_mat[(k, k)] += omega(k).powi(2);
    }
    lowest(k_mat)
}

/// Lowest eigenvalue of `-d² + (Ã(t) - ξ)²` on `(-L, L)` with Dirichlet ends,
/// `Ã(t) = t` for `t > 0` and `a t` for `t < 0`, in the sine basis.
pub fn step(a: f64, xi: f64, length: f64, modes: usize) -> f64 {
    let omega = |k: usize| k as f64 * std::f64::consts::PI / (2.0 * length);
    let phase = |k: usize| k as f64 * std::f64::consts::PI / 2.0;
    let right = [xi * xi, -2.0 * xi, 1.0];
    let left = [xi * xi, -2.0 * a * xi, a * a];
    let mut k_mat = DMatrix::zeros(modes, modes);
    for i in 0..modes {
        let k = i + 1;
        for j in 0..=i {
            let l = j + 1;
            let dw = omega(k) - omega(l);
            let sw = omega(k) + omega(l);
            let dc = phase(k) - phase(l);
            let sc = phase(k) + phase(l);
            let part = |coef: [f64; 3], p: f64, q: f64| poly_cos(coef, dw, dc, p, q) - poly_cos(coef, sw, sc, p, q);
            // (1/L) sin sin = (1/2L)[cos(diff) - cos(sum)]
            let v = (part(left, -length, 0.0) + part(right, 0.0, length)) / (2.0 * length);
            k_mat[(i, j)] = v;
            k_mat[(j, i)] = v;
        }
        k_mat[(i, i)] += omega(k).powi(2);
    }
    lowest(k_mat)
}
