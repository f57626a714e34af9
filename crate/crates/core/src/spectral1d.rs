//! One-dimensional fiber operators: the de Gennes constant and the
//! whole-line step threshold.
//!
//! Both thresholds are minima over a Fourier parameter `xi` of the lowest
//! eigenvalue of a Schrödinger operator on a line or half-line. Fibers are
//! discretized with centered second-order differences; the Neumann end uses a
//! reflected ghost node and a diagonal similarity so the stored matrix stays
//! exactly symmetric.

use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Uniform node grid on `[t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    pub t_min: f64,
    pub t_max: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid("n", format!("need at least 3 nodes, got {n}")));
        }
        if !(t_max > t_min) || !t_min.is_finite() || !t_max.is_finite() {
            return Err(invalid("t_max", format!("empty interval [{t_min}, {t_max}]")));
        }
        Ok(Self { t_min, t_max, n })
    }

    pub fn spacing(&self) -> f64 {
        (self.t_max - self.t_min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.t_min + i as f64 * self.spacing()
    }

    /// Same interval with the spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            n: 2 * self.n - 1,
            ..*self
        }
    }
}

/// Sampled band function together with its refined minimum.
#[derive(Debug, Clone, Serialize)]
pub struct FiberEigenvalueCurve {
    pub xi_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub minimizing_xi: f64,
    pub minimum: f64,
    /// Node count of the finest grid used for the refined minimum.
    pub grid_nodes: usize,
}

impl FiberEigenvalueCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("xi,lambda\n");
        for (x, l) in self.xi_values.iter().zip(&self.lambda_values) {
            out.push_str(&format!("{x},{l}\n"));
        }
        out
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
    /// Known lower bound of the spectrum.
    pub floor: f64,
}

impl SymTridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// Lower bound on the spectrum from Gershgorin discs.
    pub fn gershgorin_lower(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut r = 0.0;
                if i > 0 {
                    r += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    r += self.off[i].abs();
                }
                self.diag[i] - r
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Solves `(self - shift) x = rhs` by Thomas elimination. Requires the
    /// shifted matrix to be positive definite.
    fn solve_shifted(&self, shift: f64, rhs: &[f64], work: &mut [f64], x: &mut [f64]) {
        let n = self.len();
        let mut denom = self.diag[0] - shift;
        work[0] = if n > 1 { self.off[0] / denom } else { 0.0 };
        x[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - shift - self.off[i - 1] * work[i - 1];
            if i + 1 < n {
                work[i] = self.off[i] / denom;
            }
            x[i] = (rhs[i] - self.off[i - 1] * x[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            x[i] -= work[i] * x[i + 1];
        }
    }

    /// Lowest eigenpair by inverse iteration with a shift below the spectrum.
    pub fn lowest_eigenpair(&self) -> Result<(f64, Vec<f64>)> {
        const MAX_ITER: usize = 2000;
        let n = self.len();
        let scale = self.diag.iter().map(|d| d.abs()).fold(0.0_f64, f64::max).max(1.0);
        let lower = self.floor.max(self.gershgorin_lower());
        let shift = lower - 1e-3 * (1.0 + lower.abs());
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i % 7) as f64)).collect();
        normalize(&mut x);
        let mut y = vec![0.0; n];
        let mut ax = vec![0.0; n];
        let mut work = vec![0.0; n];
        let mut lambda = f64::INFINITY;
        let mut residual = f64::INFINITY;
        for iter in 0..MAX_ITER {
            self.solve_shifted(shift, &x, &mut work, &mut y);
            normalize(&mut y);
            std::mem::swap(&mut x, &mut y);
            self.apply(&x, &mut ax);
            let rq: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
            residual = x
                .iter()
                .zip(&ax)
                .map(|(xi, axi)| (axi - rq * xi).powi(2))
                .sum::<f64>()
                .sqrt();
            let settled = (rq - lambda).abs() <= 1e-15 * rq.abs().max(1.0);
            lambda = rq;
            if iter > 2 && (settled || residual <= 1e-13 * scale) {
                return Ok((lambda, x));
            }
        }
        if residual <= 1e-9 * scale {
            return Ok((lambda, x));
        }
        Err(Error::EigenNotConverged {
            iterations: MAX_ITER,
            residual,
        })
    }
}

fn normalize(x: &mut [f64]) {
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
}

/// Left-end condition of a fiber discretization; the right end is always
/// Dirichlet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftBoundary {
    Neumann,
    Dirichlet,
}

/// Assembles `-d²/dt² + V(t)` on `grid`.
///
/// With a Neumann left end the first node is an unknown; the ghost-node row
/// is symmetrized by the similarity `diag(1/√2, 1, 1, ...)`, which changes the
/// off-diagonal coupling of that row to `-√2/h²` and leaves the spectrum
/// untouched.
pub fn assemble_fiber(grid: &Grid1D, left: LeftBoundary, potential: impl Fn(f64) -> f64) -> SymTridiagonal {
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let first = match left {
        LeftBoundary::Neumann => 0,
        LeftBoundary::Dirichlet => 1,
    };
    let last = grid.n - 2;
    let m = last + 1 - first;
    let values: Vec<f64> = (first..=last).map(|i| potential(grid.node(i))).collect();
    // The difference part is positive semidefinite, so min V bounds the spectrum.
    let floor = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let diag: Vec<f64> = values.iter().map(|v| 2.0 * inv_h2 + v).collect();
    let mut off = vec![-inv_h2; m.saturating_sub(1)];
    if left == LeftBoundary::Neumann && m > 1 {
        off[0] = -std::f64::consts::SQRT_2 * inv_h2;
    }
    SymTridiagonal { diag, off, floor }
}

/// Lowest eigenvalue of `-d²/dt² + (t - xi)²` on `(0, t_max)` with Neumann at 0.
pub fn degennes_fiber_eigenvalue(xi: f64, grid: &Grid1D) -> Result<f64> {
    if grid.t_min != 0.0 {
        return Err(invalid("grid", "de Gennes fiber grid must start at t = 0"));
    }
    if grid.t_max < xi + 10.0 {
        return Err(invalid(
            "grid",
            format!("t_max = {} must be at least xi + 10 = {}", grid.t_max, xi + 10.0),
        ));
    }
    let op = assemble_fiber(grid, LeftBoundary::Neumann, |t| (t - xi).powi(2));
    op.lowest_eigenpair().map(|(l, _)| l.max(0.0))
}

/// Primitive of the whole-line step field `1_{t>0} + a 1_{t<0}`.
pub fn step_primitive(a: f64, t: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        a * t
    }
}

/// Checks `a ∈ [-1, 1) \ {0}`; `a = 1` passes only when `validation` is set.
pub fn check_field_ratio(a: f64, validation: bool) -> Result<()> {
    let ok = a.is_finite() && a >= -1.0 && a != 0.0 && (a < 1.0 || (validation && a == 1.0));
    if ok {
        Ok(())
    } else {
        Err(invalid("a", format!("field ratio {a} outside [-1, 1) \\ {{0}}")))
    }
}

/// Lowest eigenvalue of `-d²/dt² + (Ã(t) - xi)²` on `(-t_max, t_max)` with
/// Dirichlet ends, where `Ã` is [`step_primitive`].
pub fn step_fiber_eigenvalue(a: f64, xi: f64, grid: &Grid1D) -> Result<f64> {
    check_field_ratio(a, true)?;
    let op = assemble_fiber(grid, LeftBoundary::Dirichlet, |t| (step_primitive(a, t) - xi).powi(2));
    op.lowest_eigenpair().map(|(l, _)| l.max(0.0))
}

/// Fourth-order value from a grid and its halved-spacing refinement.
fn richardson(eval: impl Fn(&Grid1D) -> Result<f64>, grid: &Grid1D) -> Result<f64> {
    let coarse = eval(grid)?;
    let fine = eval(&grid.refined())?;
    Ok((4.0 * fine - coarse) / 3.0)
}

const SCAN_LO: f64 = -2.0;
const SCAN_HI: f64 = 4.0;
const SCAN_STEP: f64 = 0.05;
const MAX_NODES: usize = 200_001;
const DEFAULT_T_MAX: f64 = 20.0;

fn golden_section(f: &dyn Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

fn scan(f: &dyn Fn(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let steps = ((hi - lo) / SCAN_STEP).round() as usize;
    let xs: Vec<f64> = (0..=steps).map(|k| lo + k as f64 * SCAN_STEP).collect();
    let ls = xs.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    Ok((xs, ls))
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
        )
        .0
}

/// Minimizes a band function: coarse scan on a window that is widened while
/// the minimum sits on its edge, then golden-section refinement, repeated on
/// successively halved grids until the minimum moves by less than `tol`.
fn minimize_band(
    tol: f64,
    base_nodes: usize,
    band: &dyn Fn(f64, usize) -> Result<f64>,
) -> Result<FiberEigenvalueCurve> {
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("tolerance must be positive, got {tol}")));
    }
    let coarse = |x: f64| band(x, base_nodes);
    let (mut lo, mut hi) = (SCAN_LO, SCAN_HI);
    let (mut xs, mut ls) = scan(&coarse, lo, hi)?;
    // Widen while the minimum is on an edge and still dropping.
    for _ in 0..6 {
        let k = argmin(&ls);
        let width = hi - lo;
        if k == 0 {
            let (nx, nl) = scan(&coarse, lo - width, lo - SCAN_STEP)?;
            let drop = ls[0] - nl.iter().cloned().fold(f64::INFINITY, f64::min);
            lo -= width;
            xs.splice(0..0, nx);
            ls.splice(0..0, nl);
            if drop < tol {
                break;
            }
        } else if k == ls.len() - 1 {
            let (nx, nl) = scan(&coarse, hi + SCAN_STEP, hi + width)?;
            let drop = ls[k] - nl.iter().cloned().fold(f64::INFINITY, f64::min);
            hi += width;
            xs.extend(nx);
            ls.extend(nl);
            if drop < tol {
                break;
            }
        } else {
            break;
        }
    }
    let k = argmin(&ls);
    let a = xs[k.saturating_sub(1)];
    let b = xs[(k + 1).min(xs.len() - 1)];

    let mut nodes = base_nodes;
    let mut previous: Option<f64> = None;
    let (xi_star, minimum) = loop {
        let f = |x: f64| band(x, nodes);
        let (x, v) = if b > a {
            golden_section(&f, a, b, tol)?
        } else {
            (a, f(a)?)
        };
        if let Some(p) = previous {
            if (v - p).abs() < tol {
                break (x, v);
            }
        }
        if 2 * nodes - 1 > MAX_NODES {
            return Err(Error::RefinementExhausted {
                previous: previous.unwrap_or(f64::NAN),
                last: v,
            });
        }
        previous = Some(v);
        nodes = 2 * nodes - 1;
    };
    let lambda_values = xs.iter().map(|&x| band(x, nodes)).collect::<Result<Vec<_>>>()?;
    Ok(FiberEigenvalueCurve {
        xi_values: xs,
        lambda_values,
        minimizing_xi: xi_star,
        minimum,
        grid_nodes: nodes,
    })
}

/// De Gennes constant: minimum over `xi` of the Neumann half-line fiber.
pub fn compute_theta0(tol: f64) -> Result<FiberEigenvalueCurve> {
    let band = |xi: f64, n: usize| -> Result<f64> {
        let t_max = DEFAULT_T_MAX.max(xi + 10.0);
        let grid = Grid1D::new(0.0, t_max, n)?;
        richardson(|g| degennes_fiber_eigenvalue(xi, g), &grid)
    };
    let curve = minimize_band(tol, 2001, &band)?;
    theta0_cache().offer(curve.minimum, tol);
    Ok(curve)
}

/// Bottom of the whole-line step operator, minimized over `xi`.
pub fn compute_beta(a: f64, tol: f64) -> Result<FiberEigenvalueCurve> {
    check_field_ratio(a, false)?;
    let h0 = 0.01;
    let band = |xi: f64, n_base: usize| -> Result<f64> {
        // Cover both potential wells t = xi and t = xi / a.
        let half = DEFAULT_T_MAX.max(xi.abs() + 10.0).max(xi.abs() / a.abs() + 10.0);
        // Keep the spacing of the base grid for this interval length.
        let scale = (n_base - 1) as f64 / 4000.0;
        let n = ((2.0 * half / h0) * scale).ceil() as usize + 1;
        let grid = Grid1D::new(-half, half, n)?;
        richardson(|g| step_fiber_eigenvalue(a, xi, g), &grid)
    };
    minimize_band(tol, 2001, &band)
}

/// Process-wide store for the most accurate de Gennes constant computed so far.
#[derive(Debug, Default)]
pub struct Theta0Cache {
    value: OnceLock<std::sync::Mutex<(f64, f64)>>,
}

impl Theta0Cache {
    /// Records `value` if it was computed at a tolerance at least as tight as
    /// the stored one.
    pub fn offer(&self, value: f64, tol: f64) {
        let cell = self.value.get_or_init(|| std::sync::Mutex::new((value, tol)));
        let mut guard = cell.lock().unwrap_or_else(|e| e.into_inner());
        if tol <= guard.1 {
            *guard = (value, tol);
        }
    }

    pub fn get(&self) -> Option<f64> {
        self.value.get().map(|m| m.lock().unwrap_or_else(|e| e.into_inner()).0)
    }

    /// Returns the cached value, computing it at `tol` if nothing is stored.
    pub fn get_or_compute(&self, tol: f64) -> Result<f64> {
        match self.get() {
            Some(v) => Ok(v),
            None => compute_theta0(tol).map(|c| c.minimum),
        }
    }
}

pub fn theta0_cache() -> &'static Theta0Cache {
    static CACHE: OnceLock<Theta0Cache> = OnceLock::new();
    CACHE.get_or_init(Theta0Cache::default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        assert!(Grid1D::new(1.0, 1.0, 10).is_err());
        let g = Grid1D::new(0.0, 2.0, 5).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.refined().n, 9);
    }

    #[test]
    fn gaussian_ground_state_at_xi_zero() {
        let grid = Grid1D::new(0.0, 12.0, 6001).unwrap();
        let l = degennes_fiber_eigenvalue(0.0, &grid).unwrap();
        assert!((l - 1.0).abs() < 1e-6, "{l}");
    }

    #[test]
    fn far_left_shift_is_bounded_by_potential() {
        let grid = Grid1D::new(0.0, 20.0, 4001).unwrap();
        assert!(degennes_fiber_eigenvalue(-5.0, &grid).unwrap() > 25.0);
    }

    #[test]
    fn neumann_fiber_converges_at_second_order() {
        let g = Grid1D::new(0.0, 12.0, 201).unwrap();
        let e1 = (degennes_fiber_eigenvalue(0.0, &g).unwrap() - 1.0).abs();
        let e2 = (degennes_fiber_eigenvalue(0.0, &g.refined()).unwrap() - 1.0).abs();
        assert!(e1 / e2 >= 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn assembled_fiber_is_exactly_symmetric() {
        let g = Grid1D::new(0.0, 10.0, 50).unwrap();
        let op = assemble_fiber(&g, LeftBoundary::Neumann, |t| t * t);
        // Symmetric storage: one off-diagonal serves both triangles.
        assert_eq!(op.off.len(), op.diag.len() - 1);
        assert_eq!(op.off[0], -std::f64::consts::SQRT_2 / g.spacing().powi(2));
    }

    #[test]
    fn uniform_field_step_fiber_is_harmonic_oscillator() {
        let grid = Grid1D::new(-12.0, 12.0, 12001).unwrap();
        for xi in [-1.0, 0.0, 0.5, 2.0] {
            let l = step_fiber_eigenvalue(1.0, xi, &grid).unwrap();
            assert!((l - 1.0).abs() < 1e-6, "xi={xi}: {l}");
        }
    }

    #[test]
    fn rejects_bad_field_ratio() {
        assert!(check_field_ratio(0.0, true).is_err());
        assert!(check_field_ratio(1.0, false).is_err());
        assert!(check_field_ratio(-1.5, false).is_err());
        assert!(check_field_ratio(1.0, true).is_ok());
        assert!(compute_beta(0.0, 1e-3).is_err());
        assert!(compute_theta0(0.0).is_err());
    }

    #[test]
    fn enlarging_truncation_does_not_raise_eigenvalue() {
        let h = 0.01;
        let mut last = f64::INFINITY;
        for t_max in [8.0, 10.0, 14.0, 20.0] {
            let n = (t_max / h) as usize + 1;
            let g = Grid1D::new(0.0, t_max, n).unwrap();
            let l = degennes_fiber_eigenvalue(-2.0, &g).unwrap();
            assert!(l <= last + 1e-10);
            last = l;
        }
    }
}
