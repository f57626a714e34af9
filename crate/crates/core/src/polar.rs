//! Structured polar mesh of a disk with its dual (plaquette) graph and fast
//! solvers for the two Laplacians that are diagonal in the angular Fourier
//! basis.
//!
//! Nodes sit at the center and at `(r_i, θ_k)`, `i = 1..=N_r`, `θ_k = 2πk/N_θ`,
//! with `r_{N_r} = ρ` on the boundary. Primal links join radial and angular
//! neighbours (angular links are arcs). Plaquettes are the annular sectors
//! between consecutive rings and rays; their centers sit at the mid radius
//! `ϱ_j = (r_j + r_{j+1})/2` and mid angle. The control volume of a node is
//! bounded by plaquette-center radii and angles, with `ϱ_{N_r} = ρ`, so the
//! outer ring carries half cells and a natural (Neumann) boundary.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::lattice::{Lattice, Link};

/// Marks the exterior of the disk in plaquette adjacency.
pub const EXTERIOR: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct PolarMesh {
    pub rho: f64,
    pub n_theta: usize,
    /// `r_0 = 0 < r_1 < … < r_{N_r} = ρ`.
    pub radii: Vec<f64>,
    pub lattice: Lattice,
    /// Length of each primal link (arc length for angular links).
    pub link_len: Vec<f64>,
    /// Length of the dual edge crossing each primal link.
    pub dual_len: Vec<f64>,
    /// Plaquette on the left of each oriented link.
    pub left: Vec<u32>,
    /// Plaquette on the right of each oriented link, or [`EXTERIOR`].
    pub right: Vec<u32>,
    pub plaquette_area: Vec<f64>,
    pub plaquette_center: Vec<[f64; 2]>,
    /// Links lying on the boundary circle.
    pub boundary_link: Vec<bool>,
}

impl PolarMesh {
    /// `radii` must start at 0, increase strictly and end at `ρ`;
    /// `n_theta` must be a positive multiple of 4.
    pub fn new(radii: Vec<f64>, n_theta: usize) -> Result<Self> {
        if radii.len() < 2 || radii[0] != 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("radii", "need 0 = r_0 < r_1 < … < r_N"));
        }
        if n_theta < 4 || n_theta % 4 != 0 {
            return Err(invalid("n_theta", format!("{n_theta} is not a positive multiple of 4")));
        }
        let rho = *radii.last().unwrap();
        let nr = radii.len() - 1;
        let nt = n_theta;
        let dth = TAU / nt as f64;
        let mid: Vec<f64> = (0..nr).map(|j| 0.5 * (radii[j] + radii[j + 1])).collect();
        let outer_mid = |i: usize| if i < nr { mid[i] } else { rho };

        let node = |i: usize, k: usize| if i == 0 { 0 } else { 1 + (i - 1) * nt + k % nt };
        let plaq = |j: usize, k: usize| (j * nt + k % nt) as u32;

        let mut points = vec![[0.0, 0.0]];
        let mut mass = vec![PI * mid[0] * mid[0]];
        for i in 1..=nr {
            for k in 0..nt {
                let th = dth * k as f64;
                points.push([radii[i] * th.cos(), radii[i] * th.sin()]);
                let (lo, hi) = (mid[i - 1], outer_mid(i));
                mass.push(0.5 * dth * (hi * hi - lo * lo));
            }
        }

        let mut links = Vec::new();
        let mut link_len = Vec::new();
        let mut dual_len = Vec::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut boundary_link = Vec::new();
        for k in 0..nt {
            for i in 0..nr {
                links.push(Link {
                    a: node(i, k) as u32,
                    b: node(i + 1, k) as u32,
                    weight: 0.0,
                    flux: 0.0,
                });
                link_len.push(radii[i + 1] - radii[i]);
                dual_len.push(mid[i] * dth);
                left.push(plaq(i, k));
                right.push(plaq(i, k + nt - 1));
                boundary_link.push(false);
            }
            for i in 1..=nr {
                links.push(Link {
                    a: node(i, k) as u32,
                    b: node(i, k + 1) as u32,
                    weight: 0.0,
                    flux: 0.0,
                });
                link_len.push(radii[i] * dth);
                dual_len.push(outer_mid(i) - mid[i - 1]);
                left.push(plaq(i - 1, k));
                right.push(if i < nr { plaq(i, k) } else { EXTERIOR });
                boundary_link.push(i == nr);
            }
        }
        for (l, (e, d)) in links.iter_mut().zip(link_len.iter().zip(&dual_len)) {
            l.weight = d / e;
        }

        let mut plaquette_area = Vec::with_capacity(nr * nt);
        let mut plaquette_center = Vec::with_capacity(nr * nt);
        for j in 0..nr {
            for k in 0..nt {
                let th = dth * (k as f64 + 0.5);
                plaquette_area.push(0.5 * dth * (radii[j + 1].powi(2) - radii[j].powi(2)));
                plaquette_center.push([mid[j] * th.cos(), mid[j] * th.sin()]);
            }
        }
        Ok(Self {
            rho,
            n_theta,
            radii,
            lattice: Lattice {
                points,
                mass,
                links,
                dirichlet: Vec::new(),
            },
            link_len,
            dual_len,
            left,
            right,
            plaquette_area,
            plaquette_center,
            boundary_link,
        })
    }

    /// Uniform spacing `fine` within `depth` of the boundary, growing by at
    /// most `growth` per ring towards the center and capped at `coarse`.
    pub fn graded(rho: f64, n_theta: usize, fine: f64, depth: f64, growth: f64, coarse: f64) -> Result<Self> {
        if !(rho > 0.0 && fine > 0.0 && fine < rho && growth >= 1.0 && coarse >= fine) {
            return Err(invalid("mesh", "inconsistent grading parameters"));
        }
        let mut from_edge = vec![0.0];
        let mut step = fine;
        loop {
            let last = *from_edge.last().unwrap();
            if last + step >= rho - 0.5 * step {
                break;
            }
            from_edge.push(last + step);
            if last + step >= depth {
                step = (step * growth).min(coarse);
            }
        }
        let mut radii: Vec<f64> = from_edge.iter().rev().map(|d| rho - d).collect();
        radii.insert(0, 0.0);
        Self::new(radii, n_theta)
    }

    pub fn rings(&self) -> usize {
        self.radii.len() - 1
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn n_plaquettes(&self) -> usize {
        self.rings() * self.n_theta
    }

    pub fn dtheta(&self) -> f64 {
        TAU / self.n_theta as f64
    }

    /// Node index of `(i, k)`; ring 0 is the center.
    pub fn node(&self, i: usize, k: usize) -> usize {
        if i == 0 {
            0
        } else {
            1 + (i - 1) * self.n_theta + k % self.n_theta
        }
    }

    /// Nodes on the boundary circle.
    pub fn boundary_nodes(&self) -> std::ops::Range<usize> {
        let start = self.node(self.rings(), 0);
        start..start + self.n_theta
    }

    /// Stream-function link values `(|e|/|e*|)(s_R − s_L)` with `s = 0`
    /// outside the disk: the line integrals of `∇⊥ s = (−∂₂ s, ∂₁ s)`.
    pub fn perp_gradient(&self, s: &[f64]) -> Vec<f64> {
        (0..self.link_len.len())
            .map(|e| {
                let sl = s[self.left[e] as usize];
                let sr = if self.right[e] == EXTERIOR {
                    0.0
                } else {
                    s[self.right[e] as usize]
                };
                self.link_len[e] / self.dual_len[e] * (sr - sl)
            })
            .collect()
    }

    /// Transpose of [`Self::perp_gradient`].
    pub fn perp_gradient_t(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_plaquettes()];
        for e in 0..v.len() {
            let g = self.link_len[e] / self.dual_len[e] * v[e];
            out[self.left[e] as usize] -= g;
            if self.right[e] != EXTERIOR {
                out[self.right[e] as usize] += g;
            }
        }
        out
    }

    /// Counter-clockwise circulation of link values around each plaquette.
    pub fn circulation(&self, a: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_plaquettes()];
        for e in 0..a.len() {
            c[self.left[e] as usize] += a[e];
            if self.right[e] != EXTERIOR {
                c[self.right[e] as usize] -= a[e];
            }
        }
        c
    }

    /// Discrete divergence `Σ_e ±(|e*|/|e|) a_e` of a link field at each
    /// node, outward positive.
    pub fn divergence(&self, a: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.len()];
        for (e, l) in self.lattice.links.iter().enumerate() {
            let flux = self.dual_len[e] / self.link_len[e] * a[e];
            d[l.a as usize] += flux;
            d[l.b as usize] -= flux;
        }
        d
    }

    /// Node values of a link field: per node, the least-squares vector
    /// matching the adjacent link averages `a_e / |e|` along each link.
    pub fn node_vectors(&self, a: &[f64]) -> Vec<[f64; 2]> {
        let pts = &self.lattice.points;
        let mut m = vec![[0.0; 3]; self.len()];
        let mut rhs = vec![[0.0; 2]; self.len()];
        for (e, l) in self.lattice.links.iter().enumerate() {
            let (pa, pb) = (pts[l.a as usize], pts[l.b as usize]);
            let mut t = [pb[0] - pa[0], pb[1] - pa[1]];
            let n = (t[0] * t[0] + t[1] * t[1]).sqrt();
            t = [t[0] / n, t[1] / n];
            let v = a[e] / self.link_len[e];
            for node in [l.a as usize, l.b as usize] {
                m[node][0] += t[0] * t[0];
                m[node][1] += t[0] * t[1];
                m[node][2] += t[1] * t[1];
                rhs[node][0] += t[0] * v;
                rhs[node][1] += t[1] * v;
            }
        }
        m.iter()
            .zip(&rhs)
            .map(|(m, r)| {
                let det = m[0] * m[2] - m[1] * m[1];
                [(m[2] * r[0] - m[1] * r[1]) / det, (m[0] * r[1] - m[1] * r[0]) / det]
            })
            .collect()
    }
}

/// Thomas algorithm for a general tridiagonal system with real
/// coefficients; `sub[0]` and `sup[n−1]` are ignored.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [Complex64], work: &mut [f64]) {
    let n = diag.len();
    work[0] = sup[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * work[i - 1];
        work[i] = if i + 1 < n { sup[i] / den } else { 0.0 };
        let prev = rhs[i - 1];
        rhs[i] = (rhs[i] - prev * sub[i]) / den;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= next * work[i];
    }
}

struct AngularFft {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `2 − 2 cos(2πm/N)` per mode.
    symbol: Vec<f64>,
}

impl AngularFft {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            symbol: (0..n).map(|m| 2.0 - 2.0 * (TAU * m as f64 / n as f64).cos()).collect(),
        }
    }
}

impl std::fmt::Debug for AngularFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AngularFft").field("len", &self.symbol.len()).finish()
    }
}

/// Solver for the dual Laplacian `(L s)_P = Σ_e (|e|/|e*|)(s_N − s_P)` on
/// plaquettes with `s = 0` outside the disk.
#[derive(Debug)]
pub struct DualPoisson {
    nr: usize,
    nt: usize,
    ang: Vec<f64>,
    out: Vec<f64>,
    fft: AngularFft,
}

impl DualPoisson {
    pub fn new(mesh: &PolarMesh) -> Self {
        let nr = mesh.rings();
        let nt = mesh.n_theta;
        let dth = mesh.dtheta();
        let r = &mesh.radii;
        let mid: Vec<f64> = (0..nr).map(|j| 0.5 * (r[j] + r[j + 1])).collect();
        let ang = (0..nr).map(|j| (r[j + 1] - r[j]) / (mid[j] * dth)).collect();
        let out = (0..nr)
            .map(|j| {
                let next = if j + 1 < nr { mid[j + 1] } else { r[nr] };
                r[j + 1] * dth / (next - mid[j])
            })
            .collect();
        Self {
            nr,
            nt,
            ang,
            out,
            fft: AngularFft::new(nt),
        }
    }

    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        let (nr, nt) = (self.nr, self.nt);
        let mut y = vec![0.0; nr * nt];
        for j in 0..nr {
            for k in 0..nt {
                let p = j * nt + k;
                let kp = j * nt + (k + 1) % nt;
                let km = j * nt + (k + nt - 1) % nt;
                let mut v = self.ang[j] * (s[kp] + s[km] - 2.0 * s[p]);
                let outer = if j + 1 < nr { s[p + nt] } else { 0.0 };
                v += self.out[j] * (outer - s[p]);
                if j > 0 {
                    v += self.out[j - 1] * (s[p - nt] - s[p]);
                }
                y[p] = v;
            }
        }
        y
    }

    /// Solves `L s = f`.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        let (nr, nt) = (self.nr, self.nt);
        let mut spec = vec![Complex64::new(0.0, 0.0); nr * nt];
        for j in 0..nr {
            let row = &mut spec[j * nt..(j + 1) * nt];
            for (c, v) in row.iter_mut().zip(&f[j * nt..(j + 1) * nt]) {
                *c = Complex64::new(*v, 0.0);
            }
            self.fft.forward.process(row);
        }
        let mut sub = vec![0.0; nr];
        let mut diag = vec![0.0; nr];
        let mut sup = vec![0.0; nr];
        let mut work = vec![0.0; nr];
        let mut col = vec![Complex64::new(0.0, 0.0); nr];
        for m in 0..nt {
            // Negated operator, symmetric positive definite.
            for j in 0..nr {
                let inner = if j > 0 { self.out[j - 1] } else { 0.0 };
                diag[j] = self.ang[j] * self.fft.symbol[m] + self.out[j] + inner;
                sub[j] = -inner;
                sup[j] = if j + 1 < nr { -self.out[j] } else { 0.0 };
                col[j] = -spec[j * nt + m];
            }
            thomas(&sub, &diag, &sup, &mut col, &mut work);
            for j in 0..nr {
                spec[j * nt + m] = col[j];
            }
        }
        let scale = 1.0 / nt as f64;
        let mut s = vec![0.0; nr * nt];
        for j in 0..nr {
            let row = &mut spec[j * nt..(j + 1) * nt];
            self.fft.inverse.process(row);
            for (o, c) in s[j * nt..(j + 1) * nt].iter_mut().zip(row.iter()) {
                *o = c.re * scale;
            }
        }
        s
    }
}

/// Solver for `(K₀ + c M) x = f` with `K₀` the field-free node Laplacian of
/// the mesh and `M` the node masses.
#[derive(Debug)]
pub struct NodeHelmholtz {
    nr: usize,
    nt: usize,
    /// Angular link weight on ring `i` (index 0 unused).
    ang: Vec<f64>,
    /// Radial link weight between ring `i` and `i + 1`.
    rad: Vec<f64>,
    /// Mass of a node on ring `i`; entry 0 is the center.
    mass: Vec<f64>,
    shift: f64,
    fft: AngularFft,
}

impl NodeHelmholtz {
    pub fn new(mesh: &PolarMesh, shift: f64) -> Self {
        let nr = mesh.rings();
        let nt = mesh.n_theta;
        let mut ang = vec![0.0; nr + 1];
        let mut rad = vec![0.0; nr];
        // Links are stored per ray: nr radial then nr angular.
        for i in 0..nr {
            rad[i] = mesh.lattice.links[i].weight;
            ang[i + 1] = mesh.lattice.links[nr + i].weight;
        }
        let mut mass = vec![mesh.lattice.mass[0]];
        for i in 1..=nr {
            mass.push(mesh.lattice.mass[mesh.node(i, 0)]);
        }
        Self {
            nr,
            nt,
            ang,
            rad,
            mass,
            shift,
            fft: AngularFft::new(nt),
        }
    }

    pub fn solve(&self, f: &[Complex64]) -> Vec<Complex64> {
        let (nr, nt) = (self.nr, self.nt);
        let c = self.shift;
        let mut spec = f[1..].to_vec();
        for row in spec.chunks_mut(nt) {
            self.fft.forward.process(row);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); f.len()];
        let mut work = vec![0.0; nr + 1];
        // Mode 0 carries the center node as unknown 0.
        {
            let n = nr + 1;
            let mut sub = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut sup = vec![0.0; n];
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            diag[0] = nt as f64 * self.rad[0] + c * self.mass[0];
            sup[0] = -self.rad[0];
            col[0] = f[0];
            for i in 1..=nr {
                let outer = if i < nr { self.rad[i] } else { 0.0 };
                diag[i] = self.rad[i - 1] + outer + c * self.mass[i];
                sub[i] = if i == 1 {
                    -(nt as f64) * self.rad[0]
                } else {
                    -self.rad[i - 1]
                };
                sup[i] = -outer;
                col[i] = spec[(i - 1) * nt];
            }
            thomas(&sub, &diag, &sup, &mut col, &mut work);
            out[0] = col[0];
            for i in 1..=nr {
                spec[(i - 1) * nt] = col[i];
            }
        }
        let mut sub = vec![0.0; nr];
        let mut diag = vec![0.0; nr];
        let mut sup = vec![0.0; nr];
        let mut col = vec![Complex64::new(0.0, 0.0); nr];
        for m in 1..nt {
            for i in 1..=nr {
                let outer = if i < nr { self.rad[i] } else { 0.0 };
                diag[i - 1] = self.ang[i] * self.fft.symbol[m] + self.rad[i - 1] + outer + c * self.mass[i];
                sub[i - 1] = if i > 1 { -self.rad[i - 1] } else { 0.0 };
                sup[i - 1] = -outer;
                col[i - 1] = spec[(i - 1) * nt + m];
            }
            thomas(&sub, &diag, &sup, &mut col, &mut work);
            for i in 1..=nr {
                spec[(i - 1) * nt + m] = col[i - 1];
            }
        }
        let scale = 1.0 / nt as f64;
        for (i, row) in spec.chunks_mut(nt).enumerate() {
            self.fft.inverse.process(row);
            for (k, v) in row.iter().enumerate() {
                out[1 + i * nt + k] = v * scale;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::zeros;

    fn small() -> PolarMesh {
        PolarMesh::new(vec![0.0, 0.2, 0.45, 0.7, 0.85, 1.0], 12).unwrap()
    }

    #[test]
    fn masses_and_areas_tile_the_disk() {
        let m = small();
        assert!((m.lattice.total_mass() - PI).abs() < 1e-12);
        assert!((m.plaquette_area.iter().sum::<f64>() - PI).abs() < 1e-12);
    }

    #[test]
    fn perp_gradient_is_divergence_free_and_circulates_to_laplacian() {
        let m = small();
        let s: Vec<f64> = (0..m.n_plaquettes()).map(|p| ((p * 7919) % 13) as f64 - 6.0).collect();
        let a = m.perp_gradient(&s);
        assert!(m.divergence(&a).iter().all(|d| d.abs() < 1e-12));
        let lap = DualPoisson::new(&m).apply(&s);
        for (c, l) in m.circulation(&a).iter().zip(&lap) {
            assert!((c - l).abs() < 1e-12);
        }
        // Transpose identity ⟨G s, v⟩ = ⟨s, Gᵀ v⟩.
        let v: Vec<f64> = (0..a.len()).map(|e| ((e * 31) % 7) as f64 - 3.0).collect();
        let lhs: f64 = a.iter().zip(&v).map(|(x, y)| x * y).sum();
        let rhs: f64 = s.iter().zip(&m.perp_gradient_t(&v)).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn dual_poisson_inverts_apply() {
        let m = small();
        let p = DualPoisson::new(&m);
        let f: Vec<f64> = (0..m.n_plaquettes()).map(|i| (i as f64 * 0.37).sin()).collect();
        let s = p.solve(&f);
        for (x, y) in p.apply(&s).iter().zip(&f) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn node_helmholtz_inverts_field_free_operator() {
        let m = small();
        let shift = 2.5;
        let solver = NodeHelmholtz::new(&m, shift);
        let op = m.lattice.operator(0.0);
        let f: Vec<Complex64> = (0..m.len())
            .map(|i| Complex64::new((i as f64 * 0.3).cos(), (i as f64 * 0.11).sin()))
            .collect();
        let x = solver.solve(&f);
        let mut y = zeros(x.len());
        op.apply(&x, &mut y);
        for ((yi, xi), (fi, mi)) in y.iter().zip(&x).zip(f.iter().zip(&m.lattice.mass)) {
            assert!((yi + xi * (shift * mi) - fi).norm() < 1e-10);
        }
    }
}
