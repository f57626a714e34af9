//! Magnetic Neumann Laplacian on the half-plane with a step field whose edge
//! leaves the boundary at angle `alpha`, truncated to a half-disk.
//!
//! The half-disk `{x₂ ≥ 0, |x| < R}` carries a Cartesian node grid of spacing
//! `h`; the boundary row `x₂ = 0` uses half cells (magnetic Neumann condition
//! in finite-volume form) and nodes on or outside the arc are homogeneous
//! Dirichlet. Link phases are exact line integrals of the continuous,
//! piecewise linear potential, so every plaquette carries the exact flux of
//! the step field through it.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::Serialize;

use crate::eigen::{lowest_eigenpair, EigenOptions};
use crate::error::{invalid, Error, Result};
use crate::lattice::{DirichletLink, Lattice, Link, MagneticOperator, VectorPotential};
use crate::spectral1d::{check_field_ratio, theta0_cache};

/// Angle of the magnetic edge and field ratio on the far side of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WedgeParams {
    pub alpha: f64,
    pub a: f64,
}

impl WedgeParams {
    pub fn new(alpha: f64, a: f64) -> Result<Self> {
        Self::check(alpha, a, false)
    }

    /// Also accepts the uniform field `a = 1`, which has no edge.
    pub fn validation(alpha: f64, a: f64) -> Result<Self> {
        Self::check(alpha, a, true)
    }

    fn check(alpha: f64, a: f64, validation: bool) -> Result<Self> {
        if !(alpha > 0.0 && alpha < PI) {
            return Err(invalid("alpha", format!("angle {alpha} outside (0, π)")));
        }
        check_field_ratio(a, validation)?;
        Ok(Self { alpha, a })
    }

    pub fn potential(&self) -> WedgePotential {
        WedgePotential {
            alpha: self.alpha,
            a: self.a,
        }
    }
}

/// Which side of the edge ray `θ = α` a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// `0 ≤ θ ≤ α` (field 1); includes the edge ray and the origin.
    Inner,
    /// `α < θ ≤ π` (field `a`).
    Outer,
}

pub fn region_of(alpha: f64, p: [f64; 2]) -> Region {
    if p[0] == 0.0 && p[1] == 0.0 {
        return Region::Inner;
    }
    if p[1].atan2(p[0]) <= alpha {
        Region::Inner
    } else {
        Region::Outer
    }
}

/// The potential `(0, A_{α,a})`, linear on each side of the edge and
/// continuous across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WedgePotential {
    pub alpha: f64,
    pub a: f64,
}

impl WedgePotential {
    fn second_component(&self, p: [f64; 2]) -> f64 {
        let [x1, x2] = p;
        let (alpha, a) = (self.alpha, self.a);
        let right_angle = (alpha - FRAC_PI_2).abs() < 1e-12;
        match region_of(alpha, p) {
            Region::Inner => {
                if alpha < FRAC_PI_2 && !right_angle {
                    x1 + (a - 1.0) / alpha.tan() * x2
                } else {
                    x1
                }
            }
            Region::Outer => {
                if alpha > FRAC_PI_2 && !right_angle {
                    a * x1 + (1.0 - a) / alpha.tan() * x2
                } else {
                    a * x1
                }
            }
        }
    }

    /// Field strength on either side of the edge.
    pub fn field(&self, p: [f64; 2]) -> f64 {
        match region_of(self.alpha, p) {
            Region::Inner => 1.0,
            Region::Outer => self.a,
        }
    }
}

impl VectorPotential for WedgePotential {
    fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        [0.0, self.second_component(p)]
    }

    /// Exact: the segment is split where it crosses the edge ray and each
    /// linear piece is integrated by the midpoint rule.
    fn line_integral(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        let d = [q[0] - p[0], q[1] - p[1]];
        let normal = [-self.alpha.sin(), self.alpha.cos()];
        let dn = d[0] * normal[0] + d[1] * normal[1];
        let piece = |s: f64, t: f64| {
            let mid = [p[0] + 0.5 * (s + t) * d[0], p[1] + 0.5 * (s + t) * d[1]];
            // Sample strictly inside the piece so the branch is unambiguous.
            self.second_component(mid) * d[1] * (t - s)
        };
        if dn != 0.0 {
            let t = -(p[0] * normal[0] + p[1] * normal[1]) / dn;
            if t > 0.0 && t < 1.0 {
                let x = [p[0] + t * d[0], p[1] + t * d[1]];
                let along = x[0] * self.alpha.cos() + x[1] * self.alpha.sin();
                if along >= 0.0 {
                    return piece(0.0, t) + piece(t, 1.0);
                }
            }
        }
        piece(0.0, 1.0)
    }
}

/// Cartesian grid on the truncated half-plane.
#[derive(Debug, Clone)]
pub struct HalfDiskMesh {
    pub radius: f64,
    pub spacing: f64,
    pub lattice: Lattice,
    /// Integer grid coordinates `(i, j)` of each unknown, `x = (i h, j h)`.
    pub grid_index: Vec<(i32, i32)>,
    pub regions: Vec<Region>,
    pub alpha: f64,
    /// Dense `(i, j)` to node table; `u32::MAX` marks grid points off the mesh.
    lookup: Vec<u32>,
    half_width: i32,
}

impl HalfDiskMesh {
    pub fn new(radius: f64, spacing: f64, alpha: f64) -> Result<Self> {
        if !(radius > 0.0 && spacing > 0.0) || spacing >= radius / 2.0 {
            return Err(invalid(
                "mesh",
                format!("need 0 < h < R/2, got R = {radius}, h = {spacing}"),
            ));
        }
        let n = (radius / spacing).ceil() as i32;
        let inside = |i: i32, j: i32| {
            let x = i as f64 * spacing;
            let y = j as f64 * spacing;
            x * x + y * y < radius * radius * (1.0 - 1e-12)
        };
        let width = (2 * n + 1) as usize;
        let mut index = vec![u32::MAX; width * (n as usize + 1)];
        let slot = |i: i32, j: i32| (j as usize) * width + (i + n) as usize;
        let mut points = Vec::new();
        let mut mass = Vec::new();
        let mut grid_index = Vec::new();
        for j in 0..=n {
            for i in -n..=n {
                if inside(i, j) {
                    index[slot(i, j)] = points.len() as u32;
                    points.push([i as f64 * spacing, j as f64 * spacing]);
                    let cell = spacing * spacing;
                    mass.push(if j == 0 { 0.5 * cell } else { cell });
                    grid_index.push((i, j));
                }
            }
        }
        let mut links = Vec::new();
        let mut dirichlet = Vec::new();
        for (k, &(i, j)) in grid_index.iter().enumerate() {
            // Right and up neighbours become links; every missing neighbour
            // (left, right, up; down only below the boundary row) is Dirichlet.
            let horizontal_w = if j == 0 { 0.5 } else { 1.0 };
            for (di, dj, w) in [(1, 0, horizontal_w), (-1, 0, horizontal_w), (0, 1, 1.0), (0, -1, 1.0)] {
                let (ni, nj) = (i + di, j + dj);
                if nj < 0 {
                    continue;
                }
                let neighbour = if ni.abs() <= n && nj <= n && inside(ni, nj) {
                    Some(index[slot(ni, nj)])
                } else {
                    None
                };
                match neighbour {
                    Some(b) if (di, dj) == (1, 0) || (di, dj) == (0, 1) => links.push(Link {
                        a: k as u32,
                        b,
                        weight: w,
                        flux: 0.0,
                    }),
                    Some(_) => {}
                    None => dirichlet.push(DirichletLink { a: k as u32, weight: w }),
                }
            }
        }
        if points.is_empty() {
            return Err(Error::DegenerateGeometry("half-disk mesh has no nodes".into()));
        }
        let regions = points.iter().map(|&p| region_of(alpha, p)).collect();
        Ok(Self {
            radius,
            spacing,
            lattice: Lattice {
                points,
                mass,
                links,
                dirichlet,
            },
            grid_index,
            regions,
            alpha,
            lookup: index,
            half_width: n,
        })
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// Same half-disk with the spacing halved.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.radius, self.spacing / 2.0, self.alpha)
    }

    /// Link fluxes of `potential` on this mesh.
    pub fn fluxes(&self, potential: &dyn VectorPotential) -> Vec<f64> {
        let pts = &self.lattice.points;
        self.lattice
            .links
            .iter()
            .map(|l| potential.line_integral(pts[l.a as usize], pts[l.b as usize]))
            .collect()
    }

    /// Node index at grid coordinates `(i, j)`, if that node is an unknown.
    pub fn node_at(&self, i: i32, j: i32) -> Option<usize> {
        let n = self.half_width;
        if j < 0 || j > n || i.abs() > n {
            return None;
        }
        let slot = j as usize * (2 * n + 1) as usize + (i + n) as usize;
        match self.lookup[slot] {
            u32::MAX => None,
            k => Some(k as usize),
        }
    }

    /// Bilinear interpolation of a node field at `p`; grid points off the
    /// mesh count as zero.
    pub fn interpolate(&self, u: &[Complex64], p: [f64; 2]) -> Complex64 {
        let (x, y) = (p[0] / self.spacing, p[1].max(0.0) / self.spacing);
        let (i0, j0) = (x.floor() as i32, y.floor() as i32);
        let (fx, fy) = (x - i0 as f64, y - j0 as f64);
        let value = |i: i32, j: i32| self.node_at(i, j).map(|k| u[k]).unwrap_or_default();
        value(i0, j0) * ((1.0 - fx) * (1.0 - fy))
            + value(i0 + 1, j0) * (fx * (1.0 - fy))
            + value(i0, j0 + 1) * ((1.0 - fx) * fy)
            + value(i0 + 1, j0 + 1) * (fx * fy)
    }
}

/// Stiffness operator of `−(∇ − i s A_{α,a})²` on `mesh`.
pub fn assemble_magnetic_laplacian(params: &WedgeParams, mesh: &HalfDiskMesh, scale: f64) -> Result<MagneticOperator> {
    if mesh.len() < 2 {
        return Err(Error::DegenerateGeometry("mesh needs at least two nodes".into()));
    }
    if (mesh.alpha - params.alpha).abs() > 1e-15 {
        return Err(invalid("mesh", "region tags built for a different angle"));
    }
    let fluxes = mesh.fluxes(&params.potential());
    Ok(mesh.lattice.operator_with_fluxes(&fluxes, scale))
}

/// Lowest eigenpair of the truncated half-plane operator.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralResult {
    pub eigenvalue: f64,
    #[serde(skip)]
    pub eigenvector: Vec<Complex64>,
    pub residual: f64,
    pub radius: f64,
    pub spacing: f64,
    pub params: WedgeParams,
    /// Set when the eigenvalue is within the solver tolerance of `|a| Θ₀`,
    /// where a bound state cannot be distinguished from the essential floor.
    pub near_essential_floor: bool,
}

pub const DEFAULT_RADIUS: f64 = 20.0;
pub const DEFAULT_SPACING: f64 = 0.05;
pub const DEFAULT_TOL: f64 = 1e-9;

/// Lowest eigenpair on a given mesh, without the default-size preconditions.
pub fn compute_mu_on_mesh(params: &WedgeParams, mesh: &HalfDiskMesh, tol: f64) -> Result<SpectralResult> {
    let op = assemble_magnetic_laplacian(params, mesh, 1.0)?;
    let start: Vec<Complex64> = mesh
        .lattice
        .points
        .iter()
        .map(|p| Complex64::new((-(p[0] * p[0] + p[1] * p[1]) / 16.0).exp(), 0.0))
        .collect();
    // Eigenvalue error is bounded by residual² / spectral gap.
    let opts = EigenOptions {
        tol: 0.1 * tol.sqrt(),
        ..EigenOptions::default()
    };
    let pair = lowest_eigenpair(&op, &mesh.lattice.mass, Some(&start), opts)?;
    let floor = essential_floor(params.a).ok();
    let near = floor.map(|f| (pair.value - f).abs() <= tol.max(1e-6)).unwrap_or(false);
    Ok(SpectralResult {
        eigenvalue: pair.value,
        eigenvector: pair.vector,
        residual: pair.residual,
        radius: mesh.radius,
        spacing: mesh.spacing,
        params: *params,
        near_essential_floor: near,
    })
}

/// `μ(α, a)` on the half-disk of radius `R` with spacing `h`.
pub fn compute_mu(params: &WedgeParams, radius: f64, spacing: f64) -> Result<SpectralResult> {
    if radius < 15.0 {
        return Err(invalid("R", format!("truncation radius {radius} below 15")));
    }
    if spacing > radius / 100.0 {
        return Err(invalid("h", format!("spacing {spacing} above R/100")));
    }
    let mesh = HalfDiskMesh::new(radius, spacing, params.alpha)?;
    compute_mu_on_mesh(params, &mesh, DEFAULT_TOL)
}

/// Bottom of the essential spectrum, `|a| Θ₀`, from the cached de Gennes
/// constant.
pub fn essential_floor(a: f64) -> Result<f64> {
    let theta0 = theta0_cache().get().ok_or(Error::Theta0Unavailable)?;
    Ok(a.abs() * theta0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundStatus {
    /// `μ` lies below the essential floor by more than twice the error bar.
    Bound,
    /// The margin is within the error bars; a truncated computation only
    /// bounds `μ` from above, so no negative verdict is possible.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundStateReport {
    pub status: BoundStatus,
    pub is_bound: bool,
    /// `|a| Θ₀ − μ` using the fine-mesh value.
    pub margin: f64,
    pub mu: f64,
    pub mu_coarse: f64,
    /// `|μ_h − μ_{h/2}|`.
    pub error_estimate: f64,
    pub floor: f64,
}

/// Certifies `μ(α, a) < |a| Θ₀` from runs at `h` and `h/2`.
pub fn check_bound_state(params: &WedgeParams, radius: f64, spacing: f64) -> Result<BoundStateReport> {
    let coarse = compute_mu(params, radius, spacing)?;
    let fine = compute_mu(params, radius, spacing / 2.0)?;
    bound_state_from(params, coarse.eigenvalue, fine.eigenvalue)
}

pub fn bound_state_from(params: &WedgeParams, mu_coarse: f64, mu: f64) -> Result<BoundStateReport> {
    let floor = essential_floor(params.a)?;
    let error_estimate = (mu_coarse - mu).abs();
    let margin = floor - mu;
    let is_bound = margin > 2.0 * error_estimate;
    Ok(BoundStateReport {
        status: if is_bound {
            BoundStatus::Bound
        } else {
            BoundStatus::Inconclusive
        },
        is_bound,
        margin,
        mu,
        mu_coarse,
        error_estimate,
        floor,
    })
}

/// Maximum of `|u|` over nodes in radial shells `[r_k, r_{k+1})`.
pub fn shell_maxima(points: &[[f64; 2]], u: &[Complex64], edges: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0_f64; edges.len().saturating_sub(1)];
    for (p, v) in points.iter().zip(u) {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if let Some(k) = edges.windows(2).position(|w| r >= w[0] && r < w[1]) {
            out[k] = out[k].max(v.norm());
        }
    }
    out
}
