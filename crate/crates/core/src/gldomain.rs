//! Ginzburg–Landau energy on a disk cut by a straight magnetic edge.
//!
//! The disk of radius `ρ` is split by the chord `x₁ = d` into `Ω₁ = {x₁ ≥ d}`
//! (field 1) and `Ω₂` (field `a`). States live on a [`PolarMesh`]: `ψ` on
//! nodes and `A` as line integrals on links. The structured potentials are
//! `A = ∇⊥ s` with a plaquette stream function `s` vanishing outside the disk,
//! which makes them divergence free with no normal flux. The canonical
//! potential `F` is the one whose discrete curl equals the exact cell flux of
//! the step field.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::effective::{minimize_j, EffectiveProblem, MinimizeOptions, MinimizerResult};
use crate::error::{invalid, Error, Result};
use crate::halfplane::{essential_floor, HalfDiskMesh, WedgeParams};
use crate::lattice::{zeros, MagneticOperator, VectorPotential};
use crate::optim::{minimize, newton_refine, DescentOptions, NewtonOptions, Objective, StopReason};
use crate::polar::{DualPoisson, NodeHelmholtz, PolarMesh, EXTERIOR};
use crate::spectral1d::check_field_ratio;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepFieldGeometry {
    pub rho: f64,
    pub chord_offset: f64,
    pub a: f64,
    /// Chord endpoints `p₁ = (d, √(ρ²−d²))` and `p₂ = (d, −√(ρ²−d²))`.
    pub endpoints: [[f64; 2]; 2],
    /// Angle between the chord and the boundary at each endpoint, measured
    /// towards `Ω₁`.
    pub alpha: [f64; 2],
}

/// Orthonormal frame at an endpoint: `tangent` along the boundary towards
/// `Ω₁`, `normal` pointing into the disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalFrame {
    pub origin: [f64; 2],
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
    /// `det[tangent normal]`, `±1`.
    pub orientation: f64,
}

impl LocalFrame {
    /// Frame coordinates of `x` in units of `scale`.
    pub fn to_local(&self, x: [f64; 2], scale: f64) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            (d[0] * self.tangent[0] + d[1] * self.tangent[1]) / scale,
            (d[0] * self.normal[0] + d[1] * self.normal[1]) / scale,
        ]
    }
}

/// Disk of radius `rho` cut by the chord `x₁ = chord_offset`.
pub fn build_geometry(rho: f64, chord_offset: f64, a: f64) -> Result<StepFieldGeometry> {
    StepFieldGeometry::build(rho, chord_offset, a, false)
}

impl StepFieldGeometry {
    /// Also accepts the uniform field `a = 1`.
    pub fn validation(rho: f64, chord_offset: f64, a: f64) -> Result<Self> {
        Self::build(rho, chord_offset, a, true)
    }

    fn build(rho: f64, d: f64, a: f64, validation: bool) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid("rho", format!("radius {rho} must be positive")));
        }
        if !d.is_finite() || d.abs() >= rho {
            return Err(Error::DegenerateGeometry(format!(
                "chord x₁ = {d} does not cross the disk of radius {rho} transversally"
            )));
        }
        check_field_ratio(a, validation)?;
        let c = d / rho;
        let half = (rho * rho - d * d).sqrt();
        let alpha = c.acos();
        if alpha < 1e-8 || alpha > std::f64::consts::PI - 1e-8 {
            return Err(Error::DegenerateGeometry("chord is tangent to the circle".into()));
        }
        Ok(Self {
            rho,
            chord_offset: d,
            a,
            endpoints: [[d, half], [d, -half]],
            alpha: [alpha, alpha],
        })
    }

    pub fn in_omega1(&self, x: [f64; 2]) -> bool {
        x[0] >= self.chord_offset
    }

    /// Step field `B₀`; chord points take the `Ω₁` value.
    pub fn field(&self, x: [f64; 2]) -> f64 {
        if self.in_omega1(x) {
            1.0
        } else {
            self.a
        }
    }

    /// Half the distance between the endpoints.
    pub fn half_distance(&self) -> f64 {
        self.endpoints[0][1]
    }

    pub fn frame(&self, j: usize) -> LocalFrame {
        let p = self.endpoints[j];
        let normal = [-p[0] / self.rho, -p[1] / self.rho];
        let mut tangent = [-normal[1], normal[0]];
        if tangent[0] < 0.0 {
            tangent = [-tangent[0], -tangent[1]];
        }
        LocalFrame {
            origin: p,
            tangent,
            normal,
            orientation: tangent[0] * normal[1] - tangent[1] * normal[0],
        }
    }

    /// Boundary-fitted coordinates at endpoint `j` in units of `scale`: signed
    /// arc length along the circle in the direction of the frame tangent,
    /// and depth below the circle.
    pub fn fitted_coordinates(&self, j: usize, x: [f64; 2], scale: f64) -> [f64; 2] {
        let p = self.endpoints[j];
        let frame = self.frame(j);
        let theta_p = p[1].atan2(p[0]);
        let ccw = [-theta_p.sin(), theta_p.cos()];
        let s = (frame.tangent[0] * ccw[0] + frame.tangent[1] * ccw[1]).signum();
        let mut dtheta = x[1].atan2(x[0]) - theta_p;
        if dtheta > std::f64::consts::PI {
            dtheta -= TAU;
        } else if dtheta < -std::f64::consts::PI {
            dtheta += TAU;
        }
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        [s * self.rho * dtheta / scale, (self.rho - r) / scale]
    }

    /// Half-plane model at endpoint `j`.
    pub fn wedge(&self, j: usize) -> Result<WedgeParams> {
        if self.a == 1.0 {
            WedgeParams::validation(self.alpha[j], self.a)
        } else {
            WedgeParams::new(self.alpha[j], self.a)
        }
    }

    /// `∫_P B₀` for every plaquette of `mesh`.
    pub fn plaquette_fluxes(&self, mesh: &PolarMesh) -> Vec<f64> {
        let nt = mesh.n_theta;
        let dth = mesh.dtheta();
        let mut out = Vec::with_capacity(mesh.n_plaquettes());
        for j in 0..mesh.rings() {
            let (r0, r1) = (mesh.radii[j], mesh.radii[j + 1]);
            for k in 0..nt {
                let area = mesh.plaquette_area[j * nt + k];
                let th0 = dth * k as f64;
                let inside = self.sector_area_in_omega1(r0, r1, th0, th0 + dth);
                out.push(self.a * area + (1.0 - self.a) * inside);
            }
        }
        out
    }

    /// Area of `{r₀ ≤ r ≤ r₁, θ₀ ≤ θ ≤ θ₁} ∩ {x₁ ≥ d}`: exact in `r`, composite
    /// Gauss–Legendre in `θ`.
    fn sector_area_in_omega1(&self, r0: f64, r1: f64, th0: f64, th1: f64) -> f64 {
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
        let d = self.chord_offset;
        let radial = |th: f64| {
            let c = th.cos();
            let (mut lo, mut hi) = (r0, r1);
            if c > 1e-15 {
                lo = lo.max(d / c);
            } else if c < -1e-15 {
                hi = hi.min(d / c);
            } else if d > 0.0 {
                return 0.0;
            }
            if hi > lo {
                0.5 * (hi * hi - lo * lo)
            } else {
                0.0
            }
        };
        let pieces = 8;
        let w = (th1 - th0) / pieces as f64;
        let mut s = 0.0;
        for p in 0..pieces {
            let a = th0 + w * p as f64;
            for (x, wt) in X.iter().zip(W) {
                s += 0.5 * w * wt * radial(a + 0.5 * w * (1.0 + x));
            }
        }
        s
    }
}

/// Mesh controls in units of the magnetic length `(κH)^{−1/2}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GlMeshOptions {
    /// Boundary spacing, radial and angular.
    pub eta: f64,
    /// Depth of the uniformly fine boundary layer.
    pub depth: f64,
    /// Ring-to-ring growth factor inside the layer.
    pub growth: f64,
    /// Largest radial spacing. Rings further apart than a few magnetic
    /// lengths decouple and lose the field.
    pub coarse: f64,
}

impl Default for GlMeshOptions {
    fn default() -> Self {
        Self {
            eta: 1.0 / 3.0,
            depth: 16.0,
            growth: 1.08,
            coarse: 1.0,
        }
    }
}

/// Magnetic length `(κH)^{−1/2}` with `H = bκ`.
pub fn magnetic_length(kappa: f64, b: f64) -> f64 {
    1.0 / (kappa * b.sqrt())
}

/// Polar mesh resolving the magnetic length along the boundary. `N_θ` is a
/// multiple of 4, so a diameter chord lies on mesh rays.
pub fn gl_mesh(geometry: &StepFieldGeometry, kappa: f64, b: f64, opts: &GlMeshOptions) -> Result<PolarMesh> {
    if !(kappa > 0.0 && b > 0.0) {
        return Err(invalid("kappa", "κ and b must be positive"));
    }
    let lm = magnetic_length(kappa, b);
    let fine = opts.eta * lm;
    let n_theta = 4 * ((TAU * geometry.rho / fine) / 4.0).ceil() as usize;
    PolarMesh::graded(
        geometry.rho,
        n_theta.max(8),
        fine,
        (opts.depth * lm).min(0.5 * geometry.rho),
        opts.growth,
        (opts.coarse * lm).min(geometry.rho / 16.0).max(fine),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldF {
    /// Line integrals of `F` along the mesh links.
    #[serde(skip)]
    pub links: Vec<f64>,
    /// Stream function on plaquettes, zero outside the disk.
    #[serde(skip)]
    pub phi: Vec<f64>,
    /// `L²` norm of the discrete curl minus `B₀` at plaquette centers.
    pub curl_residual: f64,
    /// Largest nodal divergence.
    pub max_divergence: f64,
}

/// `F = ∇⊥ φ` with `Δφ = B₀` in flux form and `φ = 0` on the boundary.
pub fn compute_f(geometry: &StepFieldGeometry, mesh: &PolarMesh) -> Result<FieldF> {
    let flux = geometry.plaquette_fluxes(mesh);
    let poisson = DualPoisson::new(mesh);
    field_from_flux(geometry, mesh, &flux, &poisson)
}

fn field_from_flux(
    geometry: &StepFieldGeometry,
    mesh: &PolarMesh,
    flux: &[f64],
    poisson: &DualPoisson,
) -> Result<FieldF> {
    let phi = poisson.solve(flux);
    let check = poisson.apply(&phi);
    let scale = flux.iter().map(|f| f * f).sum::<f64>().sqrt();
    let defect = check.iter().zip(flux).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    if !(defect <= 1e-9 * scale.max(1e-300)) {
        return Err(Error::LinearNotConverged {
            iterations: 1,
            residual: defect / scale,
        });
    }
    let links = mesh.perp_gradient(&phi);
    let circ = mesh.circulation(&links);
    let curl_residual = circ
        .iter()
        .zip(&mesh.plaquette_area)
        .zip(&mesh.plaquette_center)
        .map(|((c, a), &p)| a * (c / a - geometry.field(p)).powi(2))
        .sum::<f64>()
        .sqrt();
    let max_divergence = mesh.divergence(&links).iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    Ok(FieldF {
        links,
        phi,
        curl_residual,
        max_divergence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlBreakdown {
    /// `Σ |(∇ − iκHA)ψ|²`.
    pub kinetic: f64,
    /// `κ² Σ m |ψ|²`.
    pub quadratic: f64,
    /// `(κ²/2) Σ m |ψ|⁴`.
    pub quartic: f64,
    /// `κ²H² Σ |curl A − B₀|²`.
    pub field: f64,
}

impl GlBreakdown {
    pub fn total(&self) -> f64 {
        self.kinetic - self.quadratic + self.quartic + self.field
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GlState {
    #[serde(skip)]
    pub psi: Vec<Complex64>,
    /// Line integrals of `A` along the mesh links.
    #[serde(skip)]
    pub links: Vec<f64>,
    /// Stream function when `A` lies in the structured class.
    #[serde(skip)]
    pub stream: Option<Vec<f64>>,
    pub kappa: f64,
    pub h: f64,
    pub energy: f64,
    pub breakdown: GlBreakdown,
}

/// A `(κ, H = bκ)` problem on a fixed geometry and mesh.
#[derive(Debug)]
pub struct GlProblem {
    pub geometry: StepFieldGeometry,
    pub mesh: PolarMesh,
    pub kappa: f64,
    pub b: f64,
    pub h: f64,
    /// `∫_P B₀` per plaquette.
    pub flux: Vec<f64>,
    pub f: FieldF,
    poisson: DualPoisson,
}

impl GlProblem {
    pub fn new(geometry: StepFieldGeometry, mesh: PolarMesh, kappa: f64, b: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid("kappa", format!("κ = {kappa} must be positive")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid("b", format!("b = {b} must be positive")));
        }
        if (mesh.rho - geometry.rho).abs() > 1e-12 * geometry.rho {
            return Err(invalid("mesh", "mesh radius differs from the disk radius"));
        }
        let flux = geometry.plaquette_fluxes(&mesh);
        let poisson = DualPoisson::new(&mesh);
        let f = field_from_flux(&geometry, &mesh, &flux, &poisson)?;
        Ok(Self {
            geometry,
            mesh,
            kappa,
            b,
            h: b * kappa,
            flux,
            f,
            poisson,
        })
    }

    /// `κH`, the scale of the magnetic phases.
    pub fn kh(&self) -> f64 {
        self.kappa * self.h
    }

    /// Warning text when `b` lies outside the concentration regime.
    pub fn regime_warning(&self) -> Option<String> {
        let floor = essential_floor(self.geometry.a).ok()?;
        (self.b * floor <= 1.0).then(|| {
            format!(
                "b = {} is not above 1/(|a|Θ₀) = {}; surface superconductivity is expected",
                self.b,
                1.0 / floor
            )
        })
    }

    fn check_state(&self, psi: &[Complex64], links: &[f64]) -> Result<()> {
        if psi.len() != self.mesh.len() {
            return Err(Error::MeshMismatch {
                expected: self.mesh.len(),
                got: psi.len(),
            });
        }
        if links.len() != self.mesh.lattice.links.len() {
            return Err(Error::MeshMismatch {
                expected: self.mesh.lattice.links.len(),
                got: links.len(),
            });
        }
        Ok(())
    }

    pub fn operator(&self, links: &[f64]) -> MagneticOperator {
        self.mesh.lattice.operator_with_fluxes(links, self.kh())
    }

    /// `(curl A − B₀)` per plaquette.
    pub fn field_defect(&self, links: &[f64]) -> Vec<f64> {
        self.mesh
            .circulation(links)
            .iter()
            .zip(&self.flux)
            .zip(&self.mesh.plaquette_area)
            .map(|((c, f), a)| (c - f) / a)
            .collect()
    }

    fn field_term(&self, links: &[f64]) -> f64 {
        let k2h2 = self.kh() * self.kh();
        k2h2 * self
            .field_defect(links)
            .iter()
            .zip(&self.mesh.plaquette_area)
            .map(|(d, a)| a * d * d)
            .sum::<f64>()
    }

    fn psi_terms(&self, psi: &[Complex64]) -> (f64, f64) {
        let k2 = self.kappa * self.kappa;
        let lat = &self.mesh.lattice;
        (k2 * lat.norm_sqr(psi), 0.5 * k2 * lat.quartic(psi))
    }

    pub fn evaluate(&self, psi: &[Complex64], links: &[f64]) -> Result<GlBreakdown> {
        self.check_state(psi, links)?;
        let (quadratic, quartic) = self.psi_terms(psi);
        Ok(GlBreakdown {
            kinetic: self.operator(links).energy(psi),
            quadratic,
            quartic,
            field: self.field_term(links),
        })
    }

    pub fn state(&self, psi: Vec<Complex64>, links: Vec<f64>, stream: Option<Vec<f64>>) -> Result<GlState> {
        let breakdown = self.evaluate(&psi, &links)?;
        Ok(GlState {
            psi,
            links,
            stream,
            kappa: self.kappa,
            h: self.h,
            energy: breakdown.total(),
            breakdown,
        })
    }

    /// `ψ = 0`, `A = F`.
    pub fn normal_state(&self) -> GlState {
        self.state(zeros(self.mesh.len()), self.f.links.clone(), Some(self.f.phi.clone()))
            .expect("normal state matches the mesh")
    }

    /// `(ψ, A) → (e^{iκHχ} ψ, A + ∇χ)`.
    pub fn gauge_transform(&self, state: &GlState, chi: impl Fn([f64; 2]) -> f64) -> Result<GlState> {
        let pts = &self.mesh.lattice.points;
        let values: Vec<f64> = pts.iter().map(|&p| chi(p)).collect();
        let links = state
            .links
            .iter()
            .zip(&self.mesh.lattice.links)
            .map(|(a, l)| a + values[l.b as usize] - values[l.a as usize])
            .collect();
        let psi = state
            .psi
            .iter()
            .zip(&values)
            .map(|(p, c)| p * Complex64::from_polar(1.0, self.kh() * c))
            .collect();
        self.state(psi, links, None)
    }
}

/// Energy of `state` on `problem`.
pub fn evaluate_gl(state: &GlState, problem: &GlProblem) -> Result<GlBreakdown> {
    problem.evaluate(&state.psi, &state.links)
}

/// `ψ`-dependent part of the energy at fixed `A` and its gradient.
fn psi_part(op: &MagneticOperator, mass: &[f64], k2: f64, psi: &[Complex64]) -> (f64, Vec<Complex64>) {
    let mut g = zeros(psi.len());
    op.apply(psi, &mut g);
    let mut e = op.energy(psi);
    for ((gi, p), m) in g.iter_mut().zip(psi).zip(mass) {
        let r2 = p.norm_sqr();
        e += k2 * m * (0.5 * r2 * r2 - r2);
        *gi = 2.0 * (*gi + p * (k2 * m * (r2 - 1.0)));
    }
    (e, g)
}

/// Gradient in the stream function `s` of the `A`-dependent energy, given
/// the link currents of `ψ` and the plaquette field defect.
fn stream_gradient(problem: &GlProblem, currents: &[f64], defect: &[f64]) -> Vec<f64> {
    let kh = problem.kh();
    let de_da: Vec<f64> = currents.iter().map(|c| 2.0 * kh * c).collect();
    let mut g = problem.mesh.perp_gradient_t(&de_da);
    for (gi, l) in g.iter_mut().zip(problem.poisson.apply(defect)) {
        *gi += 2.0 * kh * kh * l;
    }
    g
}

/// `(1/(2κ²H²)) L⁻¹ D L⁻¹`, the inverse of the field-term Hessian in `s`.
fn stream_precondition(problem: &GlProblem, g: &[f64]) -> Vec<f64> {
    let kh = problem.kh();
    let t: Vec<f64> = problem
        .poisson
        .solve(g)
        .iter()
        .zip(&problem.mesh.plaquette_area)
        .map(|(x, a)| x * a)
        .collect();
    problem
        .poisson
        .solve(&t)
        .into_iter()
        .map(|v| v / (2.0 * kh * kh))
        .collect()
}

fn to_real(v: &[Complex64]) -> Vec<f64> {
    v.iter().map(|z| z.re).collect()
}

fn to_complex(v: Vec<f64>) -> Vec<Complex64> {
    v.into_iter().map(|x| Complex64::new(x, 0.0)).collect()
}

fn psi_grad_norm(mass: &[f64], k2: f64, g: &[Complex64]) -> f64 {
    0.5 * g.iter().zip(mass).map(|(v, m)| v.norm_sqr() / m).sum::<f64>().sqrt() / k2
}

/// `(K₀ + cM)⁻¹` applied in the frame co-rotating with the phase of the
/// anchored `ψ`: `U (K₀ + cM)⁻¹ U*` with `U = diag(ψ/|ψ|)`.
struct PhasePreconditioner<'a> {
    solver: &'a NodeHelmholtz,
    phase: Vec<Complex64>,
    /// Whether `anchor` updates the frame; a fixed frame keeps the
    /// preconditioner constant across descent steps.
    follow: bool,
}

impl<'a> PhasePreconditioner<'a> {
    fn new(solver: &'a NodeHelmholtz, n: usize, follow: bool) -> Self {
        Self {
            solver,
            phase: vec![Complex64::new(1.0, 0.0); n],
            follow,
        }
    }

    fn anchor(&mut self, psi: &[Complex64]) {
        if !self.follow {
            return;
        }
        let floor = 1e-12 * psi.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (u, p) in self.phase.iter_mut().zip(psi) {
            let r = p.norm();
            *u = if r > floor && r > 0.0 {
                p / r
            } else {
                Complex64::new(1.0, 0.0)
            };
        }
    }

    /// Approximate inverse of the `ψ` Hessian, `½ U (K₀ + cM)⁻¹ U* g`.
    fn apply(&self, g: &[Complex64]) -> Vec<Complex64> {
        let rotated: Vec<Complex64> = g.iter().zip(&self.phase).map(|(v, u)| v * u.conj()).collect();
        let mut z = self.solver.solve(&rotated);
        z.iter_mut().zip(&self.phase).for_each(|(v, u)| *v *= 0.5 * u);
        z
    }
}

struct PsiObjective<'a> {
    op: MagneticOperator,
    mass: &'a [f64],
    k2: f64,
    constant: f64,
    pre: PhasePreconditioner<'a>,
}

impl Objective for PsiObjective<'_> {
    fn eval(&mut self, psi: &[Complex64]) -> (f64, Vec<Complex64>) {
        let (e, g) = psi_part(&self.op, self.mass, self.k2, psi);
        (e + self.constant, g)
    }

    fn anchor(&mut self, psi: &[Complex64]) {
        self.pre.anchor(psi);
    }

    fn precondition(&mut self, g: &[Complex64]) -> Vec<Complex64> {
        self.pre.apply(g)
    }

    fn grad_norm(&self, g: &[Complex64]) -> f64 {
        psi_grad_norm(self.mass, self.k2, g)
    }
}

/// Energy as a function of the stream function at fixed `ψ`; the variable
/// is stored in the real parts.
struct AObjective<'a> {
    problem: &'a GlProblem,
    psi: &'a [Complex64],
    constant: f64,
}

impl Objective for AObjective<'_> {
    fn eval(&mut self, s: &[Complex64]) -> (f64, Vec<Complex64>) {
        let p = self.problem;
        let links = p.mesh.perp_gradient(&to_real(s));
        let op = p.operator(&links);
        let defect = p.field_defect(&links);
        let e = op.energy(self.psi) + p.field_term(&links) + self.constant;
        let g = stream_gradient(p, &op.link_currents(self.psi), &defect);
        (e, to_complex(g))
    }

    fn precondition(&mut self, g: &[Complex64]) -> Vec<Complex64> {
        to_complex(stream_precondition(self.problem, &to_real(g)))
    }
}

/// Energy in `(ψ, s)` stacked as `[ψ; s]` with a block-diagonal
/// preconditioner.
struct JointObjective<'a> {
    problem: &'a GlProblem,
    pre: PhasePreconditioner<'a>,
}

impl Objective for JointObjective<'_> {
    fn anchor(&mut self, z: &[Complex64]) {
        self.pre.anchor(&z[..self.problem.mesh.len()]);
    }

    fn eval(&mut self, z: &[Complex64]) -> (f64, Vec<Complex64>) {
        let p = self.problem;
        let n = p.mesh.len();
        let k2 = p.kappa * p.kappa;
        let (psi, s) = z.split_at(n);
        let links = p.mesh.perp_gradient(&to_real(s));
        let op = p.operator(&links);
        let defect = p.field_defect(&links);
        let (e, mut g) = psi_part(&op, &p.mesh.lattice.mass, k2, psi);
        let gs = stream_gradient(p, &op.link_currents(psi), &defect);
        g.extend(gs.into_iter().map(|x| Complex64::new(x, 0.0)));
        (e + p.field_term(&links), g)
    }

    fn precondition(&mut self, g: &[Complex64]) -> Vec<Complex64> {
        let n = self.problem.mesh.len();
        let (gp, gs) = g.split_at(n);
        let mut z = self.pre.apply(gp);
        z.extend(to_complex(stream_precondition(self.problem, &to_real(gs))));
        z
    }

    fn grad_norm(&self, g: &[Complex64]) -> f64 {
        let p = self.problem;
        psi_grad_norm(&p.mesh.lattice.mass, p.kappa * p.kappa, &g[..p.mesh.len()])
    }
}

/// Energy of `(ψ, A = ∇⊥s)` and its gradients in `ψ` and in the
/// plaquette stream function `s`, the variables of the minimizer. The
/// normal state has `s = F.phi`.
pub fn gl_energy_gradient(
    problem: &GlProblem,
    psi: &[Complex64],
    s: &[f64],
) -> Result<(f64, Vec<Complex64>, Vec<f64>)> {
    let n = problem.mesh.len();
    if psi.len() != n {
        return Err(Error::MeshMismatch {
            expected: n,
            got: psi.len(),
        });
    }
    if s.len() != problem.f.phi.len() {
        return Err(Error::MeshMismatch {
            expected: problem.f.phi.len(),
            got: s.len(),
        });
    }
    let solver = NodeHelmholtz::new(&problem.mesh, 1.0);
    let mut joint = JointObjective {
        problem,
        pre: PhasePreconditioner::new(&solver, n, false),
    };
    let mut z = psi.to_vec();
    z.extend(s.iter().map(|&x| Complex64::new(x, 0.0)));
    let (e, mut g) = joint.eval(&z);
    let gs = to_real(&g[n..]);
    g.truncate(n);
    Ok((e, g, gs))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GlOptions {
    /// Target for `psi_residual`.
    pub tol: f64,
    /// Target for `a_residual`. The forward-difference Hessian limits the
    /// attainable value to roughly `1e-5` at `κ = 10` and `3e-4` at `κ = 40`.
    pub a_tol: f64,
    /// Alternating sweeps before the joint phase.
    pub sweeps: usize,
    /// Descent steps per block in each sweep.
    pub psi_inner: usize,
    pub a_inner: usize,
    /// Joint descent steps between residual evaluations.
    pub joint_chunk: usize,
    pub max_joint: usize,
    /// Truncated Newton steps after the joint descent.
    pub max_newton: usize,
    /// Inner conjugate-gradient steps per Newton step.
    pub max_cg: usize,
    /// Shift `c` of the `ψ` preconditioner `K₀ + c M`, in units of `κH`.
    pub shift: f64,
}

impl Default for GlOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            a_tol: 1e-3,
            sweeps: 2,
            psi_inner: 400,
            a_inner: 10,
            joint_chunk: 250,
            max_joint: 2000,
            max_newton: 60,
            max_cg: 300,
            shift: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GlMinimizer {
    pub state: GlState,
    pub converged: bool,
    pub sweeps: usize,
    pub psi_iterations: usize,
    pub a_iterations: usize,
    pub joint_iterations: usize,
    pub residual: GlResidual,
    /// Energy after every accepted step of every phase.
    #[serde(skip)]
    pub trace: Vec<f64>,
    pub warning: Option<String>,
}

/// Descent from `(psi0, F)`: alternating `ψ` and `A` sweeps followed by
/// joint descent in `(ψ, s)` and truncated Newton until both residuals reach
/// their targets or the energy stalls at working precision.
pub fn minimize_gl(problem: &GlProblem, psi0: Vec<Complex64>, opts: &GlOptions) -> Result<GlMinimizer> {
    problem.check_state(&psi0, &problem.f.links)?;
    let n = problem.mesh.len();
    let k2 = problem.kappa * problem.kappa;
    let pre = NodeHelmholtz::new(&problem.mesh, opts.shift * problem.kh());
    let mut psi = psi0;
    let mut s: Vec<Complex64> = to_complex(problem.f.phi.clone());
    let mut links = problem.f.links.clone();
    let mut trace = vec![problem.evaluate(&psi, &links)?.total()];
    let (mut psi_its, mut a_its, mut joint_its) = (0, 0, 0);
    let mut residual = gl_residual_raw(problem, &psi, &links);
    let done = |r: &GlResidual| r.psi_residual <= opts.tol && r.a_residual <= opts.a_tol;
    let mut sweeps = 0;
    while !done(&residual) && sweeps < opts.sweeps {
        sweeps += 1;
        let mut psi_obj = PsiObjective {
            op: problem.operator(&links),
            mass: &problem.mesh.lattice.mass,
            k2,
            constant: problem.field_term(&links),
            pre: PhasePreconditioner::new(&pre, n, false),
        };
        let psi_opts = DescentOptions {
            max_iter: opts.psi_inner,
            grad_tol: 0.5 * opts.tol,
            rel_energy_tol: 1e-14,
            ..DescentOptions::default()
        };
        let rep = minimize(&mut psi_obj, &mut psi, &psi_opts);
        psi_its += rep.iterations;
        trace.extend_from_slice(&rep.trace[1..]);

        let (quadratic, quartic) = problem.psi_terms(&psi);
        let mut a_obj = AObjective {
            problem,
            psi: &psi,
            constant: quartic - quadratic,
        };
        let a_opts = DescentOptions {
            max_iter: opts.a_inner,
            grad_tol: 0.0,
            rel_energy_tol: 1e-15,
            stall_window: 2,
            ..DescentOptions::default()
        };
        let rep = minimize(&mut a_obj, &mut s, &a_opts);
        a_its += rep.iterations;
        trace.extend_from_slice(&rep.trace[1..]);
        links = problem.mesh.perp_gradient(&to_real(&s));
        residual = gl_residual_raw(problem, &psi, &links);
    }

    let mut z = psi;
    z.extend_from_slice(&s);
    let mut joint = JointObjective {
        problem,
        pre: PhasePreconditioner::new(&pre, n, false),
    };
    let chunk = DescentOptions {
        max_iter: opts.joint_chunk,
        grad_tol: 0.0,
        rel_energy_tol: 1e-15,
        ..DescentOptions::default()
    };
    while !done(&residual) && joint_its < opts.max_joint {
        let rep = minimize(&mut joint, &mut z, &chunk);
        joint_its += rep.iterations;
        trace.extend_from_slice(&rep.trace[1..]);
        links = problem.mesh.perp_gradient(&to_real(&z[n..]));
        residual = gl_residual_raw(problem, &z[..n], &links);
        if rep.reason != StopReason::MaxIterations {
            break;
        }
    }
    let newton = NewtonOptions {
        max_newton: 2,
        max_cg: opts.max_cg,
        grad_tol: 0.0,
        ..NewtonOptions::default()
    };
    joint.pre.follow = true;
    let mut newton_its = 0;
    while !done(&residual) && newton_its < opts.max_newton {
        let rep = newton_refine(&mut joint, &mut z, &newton);
        newton_its += rep.iterations.max(1);
        trace.extend_from_slice(&rep.trace[1..]);
        links = problem.mesh.perp_gradient(&to_real(&z[n..]));
        residual = gl_residual_raw(problem, &z[..n], &links);
        if rep.iterations < newton.max_newton {
            break;
        }
    }
    let stream = Some(to_real(&z[n..]));
    z.truncate(n);
    let converged = done(&residual);
    let state = problem.state(z, links, stream)?;
    Ok(GlMinimizer {
        state,
        converged,
        sweeps,
        psi_iterations: psi_its,
        a_iterations: a_its,
        joint_iterations: joint_its,
        residual,
        trace,
        warning: problem.regime_warning(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlResidual {
    /// `‖(K ψ)/m + κ²(|ψ|² − 1)ψ‖_{L²} / κ²`.
    pub psi_residual: f64,
    /// Link residual of the curl–current equation, `L²`-weighted, over
    /// `(κH)^{3/2}`.
    pub a_residual: f64,
    /// Both residuals restricted to boundary nodes and boundary links.
    pub bc_residual: f64,
}

/// Discrete residuals of the two GL equations and their boundary conditions.
pub fn gl_residual(state: &GlState, problem: &GlProblem) -> Result<GlResidual> {
    problem.check_state(&state.psi, &state.links)?;
    Ok(gl_residual_raw(problem, &state.psi, &state.links))
}

fn gl_residual_raw(problem: &GlProblem, psi: &[Complex64], links: &[f64]) -> GlResidual {
    let mesh = &problem.mesh;
    let k2 = problem.kappa * problem.kappa;
    let kh = problem.kh();
    let op = problem.operator(links);
    let mut kpsi = zeros(psi.len());
    op.apply(psi, &mut kpsi);
    let node_res: Vec<f64> = kpsi
        .iter()
        .zip(psi)
        .zip(&mesh.lattice.mass)
        .map(|((k, p), m)| m * (k / m + p * (k2 * (p.norm_sqr() - 1.0))).norm_sqr())
        .collect();
    let defect = problem.field_defect(links);
    let currents = op.link_currents(psi);
    let link_res: Vec<f64> = (0..links.len())
        .map(|e| {
            let bl = defect[mesh.left[e] as usize];
            let br = if mesh.right[e] == EXTERIOR {
                0.0
            } else {
                defect[mesh.right[e] as usize]
            };
            let r = kh * currents[e] + kh * kh * (bl - br);
            r * r / (mesh.link_len[e] * mesh.dual_len[e])
        })
        .collect();
    let a_scale = kh.powf(1.5);
    let bnodes: f64 = mesh.boundary_nodes().map(|n| node_res[n]).sum();
    let blinks: f64 = link_res
        .iter()
        .zip(&mesh.boundary_link)
        .filter(|(_, &b)| b)
        .map(|(r, _)| r)
        .sum();
    GlResidual {
        psi_residual: node_res.iter().sum::<f64>().sqrt() / k2,
        a_residual: link_res.iter().sum::<f64>().sqrt() / a_scale,
        bc_residual: (bnodes / (k2 * k2) + blinks / (a_scale * a_scale)).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AprioriReport {
    pub sup_psi: f64,
    /// `‖(∇ − iκHA)ψ‖ / (κ ‖ψ‖)`.
    pub kinetic_ratio: f64,
    /// `H ‖curl(A − F)‖ / ‖ψ‖²`.
    pub field_ratio: f64,
    pub sup_ok: bool,
}

/// Measured constants of the a-priori bounds on `‖ψ‖_∞`, `‖∇_Aψ‖` and
/// `‖curl(A − F)‖`.
pub fn apriori_check(state: &GlState, problem: &GlProblem) -> Result<AprioriReport> {
    problem.check_state(&state.psi, &state.links)?;
    let sup_psi = state.psi.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let norm2 = problem.mesh.lattice.norm_sqr(&state.psi);
    let kinetic = problem.operator(&state.links).energy(&state.psi);
    let circ_a = problem.mesh.circulation(&state.links);
    let circ_f = problem.mesh.circulation(&problem.f.links);
    let curl_diff = circ_a
        .iter()
        .zip(&circ_f)
        .zip(&problem.mesh.plaquette_area)
        .map(|((x, y), a)| (x - y).powi(2) / a)
        .sum::<f64>()
        .sqrt();
    let (kinetic_ratio, field_ratio) = if norm2 > 0.0 {
        (
            kinetic.sqrt() / (problem.kappa * norm2.sqrt()),
            problem.h * curl_diff / norm2,
        )
    } else {
        (0.0, 0.0)
    };
    Ok(AprioriReport {
        sup_psi,
        kinetic_ratio,
        field_ratio,
        sup_ok: sup_psi <= 1.0 + 1e-3,
    })
}

/// Effective minimizer used for one endpoint of the test state.
#[derive(Debug, Clone)]
pub struct EndpointModel {
    pub wedge: WedgeParams,
    pub mesh: HalfDiskMesh,
    pub result: MinimizerResult,
}

/// Test state of the upper-bound construction.
#[derive(Debug, Clone)]
pub struct TestState {
    pub psi: Vec<Complex64>,
    pub cutoff_radius: f64,
    pub models: Vec<EndpointModel>,
}

/// Minimizes the effective functional at both endpoints on half-disk meshes
/// of spacing `eta` (magnetic units) and transplants the minimizers, gauge
/// matched to `F` and cut off smoothly at `cutoff_radius`.
pub fn effective_test_state(problem: &GlProblem, eta: f64) -> Result<TestState> {
    let lm = magnetic_length(problem.kappa, problem.b);
    let cutoff_radius = (0.9 * problem.geometry.half_distance()).min(20.0 * lm);
    let radius = cutoff_radius / lm + 2.0 * eta;
    let mut models: Vec<EndpointModel> = Vec::new();
    let mut psi = zeros(problem.mesh.len());
    for j in 0..problem.geometry.endpoints.len() {
        let wedge = problem.geometry.wedge(j)?;
        let model = match models.iter().find(|m| m.wedge == wedge) {
            Some(m) => m.clone(),
            None => {
                let mesh = HalfDiskMesh::new(radius, eta, wedge.alpha)?;
                let eff = EffectiveProblem::unchecked(problem.b, wedge, mesh.clone())?;
                let result = minimize_j(&eff, &MinimizeOptions::for_mesh(&mesh))?;
                EndpointModel { wedge, mesh, result }
            }
        };
        if !model.result.trivial {
            let u = |y: [f64; 2]| model.mesh.interpolate(&model.result.state, y);
            let part = transplant(problem, &model.wedge, j, cutoff_radius, u);
            psi.iter_mut().zip(&part).for_each(|(p, q)| *p += q);
        }
        models.push(model);
    }
    Ok(TestState {
        psi,
        cutoff_radius,
        models,
    })
}

/// Gaussian bumps of height `amplitude` and width two magnetic lengths at
/// every endpoint, gauge matched like the test state.
pub fn seed_state(problem: &GlProblem, amplitude: f64) -> Vec<Complex64> {
    let lm = magnetic_length(problem.kappa, problem.b);
    let cutoff = (0.9 * problem.geometry.half_distance()).min(20.0 * lm);
    let mut psi = zeros(problem.mesh.len());
    for j in 0..problem.geometry.endpoints.len() {
        let Ok(wedge) = problem.geometry.wedge(j) else {
            continue;
        };
        let u = |y: [f64; 2]| Complex64::new(amplitude * (-(y[0] * y[0] + y[1] * y[1]) / 8.0).exp(), 0.0);
        let part = transplant(problem, &wedge, j, cutoff, u);
        psi.iter_mut().zip(&part).for_each(|(p, q)| *p += q);
    }
    psi
}

/// `χ(|x − p_j|) ũ(y(x)) e^{iφ(x)}`. Here `y` are boundary-fitted coordinates
/// at `p_j` in magnetic lengths, `ũ` is `u` (conjugated when the frame is
/// left handed) and `φ` integrates the difference of the GL and model link
/// phases along a breadth-first tree from `p_j`.
fn transplant(
    problem: &GlProblem,
    wedge: &WedgeParams,
    j: usize,
    cutoff: f64,
    u: impl Fn([f64; 2]) -> Complex64,
) -> Vec<Complex64> {
    let mesh = &problem.mesh;
    let pts = &mesh.lattice.points;
    let geometry = &problem.geometry;
    let origin = geometry.endpoints[j];
    let sigma = geometry.frame(j).orientation;
    let lm = magnetic_length(problem.kappa, problem.b);
    let kh = problem.kh();
    let pot = wedge.potential();
    let dist = |p: [f64; 2]| ((p[0] - origin[0]).powi(2) + (p[1] - origin[1]).powi(2)).sqrt();
    let local = |p: [f64; 2]| geometry.fitted_coordinates(j, p, lm);

    let mut adj: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); mesh.len()];
    for (e, l) in mesh.lattice.links.iter().enumerate() {
        adj[l.a as usize].push((l.b as usize, e, 1.0));
        adj[l.b as usize].push((l.a as usize, e, -1.0));
    }
    let start = (0..mesh.len())
        .min_by(|&x, &y| dist(pts[x]).total_cmp(&dist(pts[y])))
        .expect("mesh has nodes");
    let mut phase = vec![f64::NAN; mesh.len()];
    phase[start] = 0.0;
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &(m, e, sign) in &adj[n] {
            if !phase[m].is_nan() || dist(pts[m]) >= cutoff {
                continue;
            }
            let model_phase = sigma * pot.line_integral(local(pts[n]), local(pts[m]));
            phase[m] = phase[n] + sign * kh * problem.f.links[e] - model_phase;
            queue.push_back(m);
        }
    }
    let cut = |r: f64| 1.0 - crate::effective::smooth_step((r / cutoff - 0.7) / 0.3);
    (0..mesh.len())
        .map(|n| {
            if phase[n].is_nan() {
                return Complex64::new(0.0, 0.0);
            }
            let mut v = u(local(pts[n]));
            if sigma < 0.0 {
                v = v.conj();
            }
            v * Complex64::from_polar(cut(dist(pts[n])), phase[n])
        })
        .collect()
}
