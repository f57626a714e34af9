//! Node/link discretization of magnetic quadratic forms.
//!
//! A [`Lattice`] stores unknown nodes with quadrature masses and weighted links
//! carrying the line integral of the vector potential. The discrete magnetic
//! energy is
//!
//! ```text
//! Q(ψ) = Σ_links w |ψ_b − e^{i s θ_ab} ψ_a|² + Σ_dirichlet w |ψ_a|²
//! ```
//!
//! where `θ_ab = ∫_a^b A·dl` and `s` scales the potential. Gauge covariance is
//! exact: replacing `θ_ab` by `θ_ab + χ_b − χ_a` and `ψ` by `e^{i s χ} ψ`
//! leaves `Q` unchanged.

use num_complex::Complex64;

/// Link between two unknown nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: u32,
    pub b: u32,
    pub weight: f64,
    /// `∫_a^b A·dl` for the reference potential.
    pub flux: f64,
}

/// Link from an unknown node to a node with a homogeneous Dirichlet value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletLink {
    pub a: u32,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Lattice {
    pub points: Vec<[f64; 2]>,
    pub mass: Vec<f64>,
    pub links: Vec<Link>,
    pub dirichlet: Vec<DirichletLink>,
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Replaces link fluxes with line integrals of `potential`.
    pub fn set_fluxes(&mut self, potential: &dyn VectorPotential) {
        for l in &mut self.links {
            l.flux = potential.line_integral(self.points[l.a as usize], self.points[l.b as usize]);
        }
    }

    pub fn fluxes(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.flux).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `Σ m |ψ|²`.
    pub fn norm_sqr(&self, psi: &[Complex64]) -> f64 {
        self.mass.iter().zip(psi).map(|(m, p)| m * p.norm_sqr()).sum()
    }

    /// `Σ m |ψ|⁴`.
    pub fn quartic(&self, psi: &[Complex64]) -> f64 {
        self.mass.iter().zip(psi).map(|(m, p)| m * p.norm_sqr().powi(2)).sum()
    }

    /// Magnetic operator for potential scale `s` using the stored fluxes.
    pub fn operator(&self, scale: f64) -> MagneticOperator {
        self.operator_with_fluxes(&self.fluxes(), scale)
    }

    pub fn operator_with_fluxes(&self, fluxes: &[f64], scale: f64) -> MagneticOperator {
        assert_eq!(fluxes.len(), self.links.len());
        let mut diag = vec![0.0; self.len()];
        for l in &self.links {
            diag[l.a as usize] += l.weight;
            diag[l.b as usize] += l.weight;
        }
        for d in &self.dirichlet {
            diag[d.a as usize] += d.weight;
        }
        let phase = fluxes.iter().map(|f| Complex64::from_polar(1.0, scale * f)).collect();
        MagneticOperator {
            ends: self.links.iter().map(|l| (l.a, l.b)).collect(),
            weight: self.links.iter().map(|l| l.weight).collect(),
            phase,
            diag,
        }
    }
}

/// Stiffness operator `K` of a magnetic quadratic form, `Q(ψ) = ⟨ψ, Kψ⟩`.
#[derive(Debug, Clone)]
pub struct MagneticOperator {
    ends: Vec<(u32, u32)>,
    weight: Vec<f64>,
    phase: Vec<Complex64>,
    pub diag: Vec<f64>,
}

impl MagneticOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `y = K x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.diag) {
            *yi = xi * d;
        }
        for ((&(a, b), &w), &u) in self.ends.iter().zip(&self.weight).zip(&self.phase) {
            let (a, b) = (a as usize, b as usize);
            let xa = x[a];
            let xb = x[b];
            y[a] -= w * u.conj() * xb;
            y[b] -= w * u * xa;
        }
    }

    /// `⟨x, K x⟩`, accumulated link by link.
    pub fn energy(&self, x: &[Complex64]) -> f64 {
        let mut e = 0.0;
        let mut link_diag = vec![0.0; self.len()];
        for ((&(a, b), &w), &u) in self.ends.iter().zip(&self.weight).zip(&self.phase) {
            let (a, b) = (a as usize, b as usize);
            e += w * (x[b] - u * x[a]).norm_sqr();
            link_diag[a] += w;
            link_diag[b] += w;
        }
        // Remaining diagonal is the Dirichlet part.
        for ((d, l), xi) in self.diag.iter().zip(&link_diag).zip(x) {
            e += (d - l) * xi.norm_sqr();
        }
        e
    }

    /// Per-node share of `⟨x, K x⟩`: each link contributes half to each end.
    pub fn node_energy(&self, x: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut link_diag = vec![0.0; self.len()];
        for ((&(a, b), &w), &u) in self.ends.iter().zip(&self.weight).zip(&self.phase) {
            let (a, b) = (a as usize, b as usize);
            let e = 0.5 * w * (x[b] - u * x[a]).norm_sqr();
            out[a] += e;
            out[b] += e;
            link_diag[a] += w;
            link_diag[b] += w;
        }
        for (((o, d), l), xi) in out.iter_mut().zip(&self.diag).zip(&link_diag).zip(x) {
            *o += (d - l) * xi.norm_sqr();
        }
        out
    }

    /// Per-link `Im(conj(ψ_b) U ψ_a)` times the weight; the derivative of the
    /// form with respect to the link phase is `-2 s` times this value.
    pub fn link_currents(&self, x: &[Complex64]) -> Vec<f64> {
        self.ends
            .iter()
            .zip(&self.weight)
            .zip(&self.phase)
            .map(|((&(a, b), &w), &u)| w * (x[b as usize].conj() * u * x[a as usize]).im)
            .collect()
    }

    /// Largest absolute entry of `K − K†` when assembled densely; zero by
    /// construction, exposed for checks.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((_, &w), &u) in self.ends.iter().zip(&self.weight).zip(&self.phase) {
            // K[a][b] = -w conj(u), K[b][a] = -w u
            let kab = -w * u.conj();
            let kba = -w * u;
            worst = worst.max((kab - kba.conj()).norm());
        }
        worst
    }

    /// Dense copy of `K` (small meshes only).
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.len();
        let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (i, d) in self.diag.iter().enumerate() {
            m[i][i] += d;
        }
        for ((&(a, b), &w), &u) in self.ends.iter().zip(&self.weight).zip(&self.phase) {
            let (a, b) = (a as usize, b as usize);
            m[a][b] -= w * u.conj();
            m[b][a] -= w * u;
        }
        m
    }
}

/// A planar vector potential with line integrals along straight segments.
pub trait VectorPotential {
    fn eval(&self, p: [f64; 2]) -> [f64; 2];

    /// `∫_a^b A·dl` along the segment; default is 4-point Gauss–Legendre.
    fn line_integral(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        const X: [f64; 4] = [
            -0.861_136_311_594_052_6,
            -0.339_981_043_584_856_3,
            0.339_981_043_584_856_3,
            0.861_136_311_594_052_6,
        ];
        const W: [f64; 4] = [
            0.347_854_845_137_453_9,
            0.652_145_154_862_546_1,
            0.652_145_154_862_546_1,
            0.347_854_845_137_453_9,
        ];
        let d = [b[0] - a[0], b[1] - a[1]];
        let mut s = 0.0;
        for (x, w) in X.iter().zip(W) {
            let t = 0.5 * (1.0 + x);
            let v = self.eval([a[0] + t * d[0], a[1] + t * d[1]]);
            s += w * (v[0] * d[0] + v[1] * d[1]);
        }
        0.5 * s
    }
}

/// Zero potential.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoField;

impl VectorPotential for NoField {
    fn eval(&self, _p: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn line_integral(&self, _a: [f64; 2], _b: [f64; 2]) -> f64 {
        0.0
    }
}

pub fn zeros(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); n]
}

/// Weighted inner product `Σ m conj(x) y`.
pub fn mass_dot(mass: &[f64], x: &[Complex64], y: &[Complex64]) -> Complex64 {
    mass.iter()
        .zip(x.iter().zip(y))
        .map(|(m, (a, b))| a.conj() * b * m)
        .sum()
}
