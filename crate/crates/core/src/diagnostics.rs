//! Measurements on GL states: local energies, concentration near the chord
//! endpoints, decay away from them and the critical-field ladder.

use serde::Serialize;

use crate::effective::linear_fit;
use crate::error::{invalid, Error, Result};
use crate::gldomain::{
    effective_test_state, gl_mesh, magnetic_length, minimize_gl, seed_state, GlMeshOptions, GlOptions, GlProblem,
    GlState, StepFieldGeometry,
};

/// Nodes within distance `radius` of `center`.
#[derive(Debug, Clone, Serialize)]
pub struct Neighborhood {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(skip)]
    pub mask: Vec<bool>,
}

impl Neighborhood {
    pub fn new(problem: &GlProblem, center: [f64; 2], radius: f64) -> Self {
        let mask = problem
            .mesh
            .lattice
            .points
            .iter()
            .map(|p| dist(*p, center) <= radius)
            .collect();
        Self { center, radius, mask }
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Neighbourhood radius `c κ^{−0.85}` with `c` chosen so that the radius spans
/// `min_lengths` magnetic lengths at `kappa_min`.
pub fn calibrated_ell(kappa: f64, b: f64, kappa_min: f64, min_lengths: f64) -> f64 {
    let c = min_lengths / (b.sqrt() * kappa_min.powf(0.15));
    c * kappa.powf(-0.85)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalEnergy {
    /// Kinetic, quadratic and quartic terms over the region.
    pub e0: f64,
    /// `e0` plus the global field term.
    pub e: f64,
}

/// Per-node share of the `ψ` terms of the energy; kinetic link terms are split
/// evenly between their endpoints.
pub fn node_energy_density(state: &GlState, problem: &GlProblem) -> Vec<f64> {
    let k2 = problem.kappa * problem.kappa;
    let mut out = problem.operator(&state.links).node_energy(&state.psi);
    for ((o, p), m) in out.iter_mut().zip(&state.psi).zip(&problem.mesh.lattice.mass) {
        let r2 = p.norm_sqr();
        *o += k2 * m * (0.5 * r2 * r2 - r2);
    }
    out
}

pub fn local_energy(state: &GlState, problem: &GlProblem, mask: &[bool]) -> Result<LocalEnergy> {
    if mask.len() != problem.mesh.len() {
        return Err(Error::MeshMismatch {
            expected: problem.mesh.len(),
            got: mask.len(),
        });
    }
    let density = node_energy_density(state, problem);
    let e0: f64 = density.iter().zip(mask).filter(|(_, &m)| m).map(|(d, _)| d).sum();
    Ok(LocalEnergy {
        e0,
        e: e0 + state.breakdown.field,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PointConcentration {
    pub center: [f64; 2],
    /// `κ² ∫_{𝓝_j} |ψ|⁴`.
    pub l4_mass: f64,
    pub e_eff: f64,
    pub mismatch_with_2e: f64,
    pub mismatch_with_2e_over_b: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub ell: f64,
    pub b: f64,
    pub points: Vec<PointConcentration>,
    /// `κ² ∫_Ω |ψ|⁴`.
    pub total_l4: f64,
    /// Share of `∫|ψ|⁴` inside the union of the neighbourhoods.
    pub l4_fraction: f64,
    pub e_gst: f64,
    pub sum_e: f64,
    pub sum_e_over_b: f64,
    pub global_mismatch: f64,
    pub global_mismatch_over_b: f64,
}

impl ConcentrationReport {
    /// Smaller of the two per-point normalizations, worst point.
    pub fn best_local_mismatch(&self) -> f64 {
        let worst = |f: fn(&PointConcentration) -> f64| self.points.iter().map(f).fold(0.0, f64::max);
        worst(|p| p.mismatch_with_2e).min(worst(|p| p.mismatch_with_2e_over_b))
    }

    pub fn best_global_mismatch(&self) -> f64 {
        self.global_mismatch.min(self.global_mismatch_over_b)
    }

    /// Relative difference of the neighbourhood masses.
    pub fn symmetry_defect(&self) -> f64 {
        let m: Vec<f64> = self.points.iter().map(|p| p.l4_mass).collect();
        let hi = m.iter().cloned().fold(0.0, f64::max);
        let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
        if hi > 0.0 {
            (hi - lo) / hi
        } else {
            0.0
        }
    }
}

/// Compares the `L⁴` mass near each endpoint with the effective energies
/// `eff_energies[j]` (zero for inactive endpoints).
pub fn concentration_report(
    state: &GlState,
    problem: &GlProblem,
    ell: f64,
    eff_energies: &[f64],
) -> Result<ConcentrationReport> {
    let geometry = &problem.geometry;
    if eff_energies.len() != geometry.endpoints.len() {
        return Err(invalid("eff_energies", "one effective energy per endpoint is required"));
    }
    if !(ell > 0.0) {
        return Err(invalid("ell", "radius must be positive"));
    }
    let half = geometry.half_distance();
    if ell >= half {
        return Err(Error::OverlappingNeighborhoods {
            ell,
            half_distance: half,
        });
    }
    let k2 = problem.kappa * problem.kappa;
    let b = problem.b;
    let pts = &problem.mesh.lattice.points;
    let q: Vec<f64> = state
        .psi
        .iter()
        .zip(&problem.mesh.lattice.mass)
        .map(|(p, m)| k2 * m * p.norm_sqr().powi(2))
        .collect();
    let total_l4: f64 = q.iter().sum();
    let mut inside = 0.0;
    let mut points = Vec::new();
    for (center, &e) in geometry.endpoints.iter().zip(eff_energies) {
        let l4_mass: f64 = q
            .iter()
            .zip(pts)
            .filter(|(_, p)| dist(**p, *center) <= ell)
            .map(|(v, _)| v)
            .sum();
        inside += l4_mass;
        points.push(PointConcentration {
            center: *center,
            l4_mass,
            e_eff: e,
            mismatch_with_2e: (l4_mass + 2.0 * e).abs(),
            mismatch_with_2e_over_b: (l4_mass + 2.0 * e / b).abs(),
        });
    }
    let sum_e: f64 = eff_energies.iter().sum();
    Ok(ConcentrationReport {
        ell,
        b,
        points,
        total_l4,
        l4_fraction: if total_l4 > 0.0 { inside / total_l4 } else { 0.0 },
        e_gst: state.energy,
        sum_e,
        sum_e_over_b: sum_e / b,
        global_mismatch: (state.energy - sum_e).abs(),
        global_mismatch_over_b: (state.energy - sum_e / b).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecayStatus {
    Fitted,
    /// `|ψ|` is below the normal-state threshold everywhere.
    Normal,
    /// Too few shells above the noise floor.
    Insufficient,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayProfile {
    pub ell: f64,
    /// `∫_{dist ≥ ℓ} |ψ|² + (κH)^{−1}|(∇ − iκHA)ψ|²`.
    pub weighted_mass: f64,
    /// Decay rate of the shell maxima of `|ψ|` in the variable `√(κH) dist`.
    pub fitted_rate: Option<f64>,
    /// `R²` of the log-linear fit.
    pub fit_quality: f64,
    pub status: DecayStatus,
    /// `(√(κH) dist, max |ψ|)` per shell.
    pub shells: Vec<(f64, f64)>,
}

/// `sup|ψ|` below which a state counts as normal.
pub const NORMAL_THRESHOLD: f64 = 1e-3;

/// Decay of `state` away from the point set `s`, with shells between `ell` and
/// `outer`.
pub fn decay_profile(
    state: &GlState,
    problem: &GlProblem,
    s: &[[f64; 2]],
    ell: f64,
    outer: f64,
) -> Result<DecayProfile> {
    if !(ell > 0.0 && outer > ell) {
        return Err(invalid("ell", format!("need 0 < ell < outer, got {ell}, {outer}")));
    }
    let kh = problem.kh();
    let pts = &problem.mesh.lattice.points;
    let d: Vec<f64> = pts
        .iter()
        .map(|&p| s.iter().map(|&c| dist(p, c)).fold(f64::INFINITY, f64::min))
        .collect();
    let kinetic = problem.operator(&state.links).node_energy(&state.psi);
    let weighted_mass: f64 = (0..pts.len())
        .filter(|&n| d[n] >= ell)
        .map(|n| problem.mesh.lattice.mass[n] * state.psi[n].norm_sqr() + kinetic[n] / kh)
        .sum();
    let sup = state.psi.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut profile = DecayProfile {
        ell,
        weighted_mass,
        fitted_rate: None,
        fit_quality: 0.0,
        status: DecayStatus::Normal,
        shells: Vec::new(),
    };
    if sup < NORMAL_THRESHOLD || s.is_empty() {
        return Ok(profile);
    }
    const SHELLS: usize = 20;
    let width = (outer - ell) / SHELLS as f64;
    let mut maxima = vec![0.0_f64; SHELLS];
    for (n, &dn) in d.iter().enumerate() {
        if dn >= ell && dn < outer {
            let k = (((dn - ell) / width) as usize).min(SHELLS - 1);
            maxima[k] = maxima[k].max(state.psi[n].norm());
        }
    }
    let scale = kh.sqrt();
    profile.shells = maxima
        .iter()
        .enumerate()
        .map(|(k, &m)| (scale * (ell + (k as f64 + 0.5) * width), m))
        .collect();
    let floor = 1e-10 * sup;
    let data: Vec<(f64, f64)> = profile
        .shells
        .iter()
        .filter(|(_, m)| *m > floor)
        .map(|&(t, m)| (t, m.ln()))
        .collect();
    if data.len() < 4 {
        profile.status = DecayStatus::Insufficient;
        return Ok(profile);
    }
    let (slope, quality) = linear_fit(&data);
    profile.fitted_rate = Some(-slope);
    profile.fit_quality = quality;
    profile.status = DecayStatus::Fitted;
    Ok(profile)
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalFieldReport {
    pub kappa: f64,
    pub h_c2: f64,
    pub h_int: f64,
    /// `(j, κ/μ_j)` sorted by field, for endpoints with a certified bound state.
    pub h_j: Vec<(usize, f64)>,
    /// Endpoints whose `μ_j ≥ |a|Θ₀`.
    pub violated: Vec<usize>,
    pub mu: Vec<f64>,
}

impl CriticalFieldReport {
    /// `H_C2 < H_int < H_1 ≤ … ≤ H_n`.
    pub fn ordering_holds(&self) -> bool {
        self.h_c2 < self.h_int
            && self.h_j.first().map_or(true, |&(_, h)| self.h_int < h)
            && self.h_j.windows(2).all(|w| w[0].1 <= w[1].1)
    }

    /// Endpoints with `μ_j < 1/b`.
    pub fn active_set(&self, b: f64) -> Vec<usize> {
        (0..self.mu.len()).filter(|&j| self.mu[j] * b < 1.0).collect()
    }
}

pub fn critical_fields(
    geometry: &StepFieldGeometry,
    kappa: f64,
    theta0: f64,
    mu_values: &[f64],
) -> Result<CriticalFieldReport> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa", "κ must be positive"));
    }
    if mu_values.len() != geometry.endpoints.len() {
        return Err(invalid("mu_values", "one μ per endpoint is required"));
    }
    let a = geometry.a.abs();
    let mut h_j = Vec::new();
    let mut violated = Vec::new();
    for (j, &mu) in mu_values.iter().enumerate() {
        if !(mu > 0.0) {
            return Err(invalid("mu_values", format!("μ_{j} = {mu} must be positive")));
        }
        if mu >= a * theta0 {
            violated.push(j);
        } else {
            h_j.push((j, kappa / mu));
        }
    }
    h_j.sort_by(|x, y| x.1.total_cmp(&y.1));
    Ok(CriticalFieldReport {
        kappa,
        h_c2: kappa / a,
        h_int: kappa / (a * theta0),
        h_j,
        violated,
        mu: mu_values.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    NearAllPoints,
    Partial,
    Normal,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::NearAllPoints => "near-all-points",
            Regime::Partial => "partial",
            Regime::Normal => "normal",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseRow {
    pub kappa: f64,
    pub b: f64,
    pub regime: Regime,
    /// Active set predicted from `μ`.
    pub active: Vec<usize>,
    /// `κ² ∫_{𝓝_j} |ψ|⁴` per endpoint.
    pub masses: Vec<f64>,
    pub e_gst: f64,
    pub sup_psi: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhaseOptions {
    pub mesh: GlMeshOptions,
    pub solver: GlOptions,
    /// Effective-model spacing for the initial state.
    pub eta: f64,
    /// Neighbourhood radius in magnetic lengths.
    pub ell_lengths: f64,
    /// `sup_{𝓝_j} |ψ|` above which endpoint `j` counts as superconducting.
    pub carrier_threshold: f64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self {
            mesh: GlMeshOptions::default(),
            solver: GlOptions::default(),
            eta: 1.0 / 3.0,
            ell_lengths: 8.0,
            carrier_threshold: 0.05,
        }
    }
}

/// Solves one `(κ, b)` cell. The initial state is the transplanted effective
/// minimizer, or endpoint bumps when that is trivial.
pub fn solve_cell(
    geometry: &StepFieldGeometry,
    kappa: f64,
    b: f64,
    opts: &PhaseOptions,
) -> Result<(GlProblem, GlState, bool)> {
    let mesh = gl_mesh(geometry, kappa, b, &opts.mesh)?;
    let problem = GlProblem::new(*geometry, mesh, kappa, b)?;
    let test = effective_test_state(&problem, opts.eta)?;
    let psi0 = if test.psi.iter().any(|v| v.norm() > 1e-8) {
        test.psi
    } else {
        seed_state(&problem, 0.5)
    };
    let result = minimize_gl(&problem, psi0, &opts.solver)?;
    Ok((problem, result.state, result.converged))
}

/// One row per `(κ, b)` pair; failed cells carry their error text.
pub fn phase_diagram(
    geometry: &StepFieldGeometry,
    kappa_grid: &[f64],
    b_grid: &[f64],
    mu_values: &[f64],
    opts: &PhaseOptions,
) -> Vec<PhaseRow> {
    let mut rows = Vec::new();
    for &kappa in kappa_grid {
        for &b in b_grid {
            let active = (0..mu_values.len()).filter(|&j| mu_values[j] * b < 1.0).collect();
            let mut row = PhaseRow {
                kappa,
                b,
                regime: Regime::Normal,
                active,
                masses: Vec::new(),
                e_gst: f64::NAN,
                sup_psi: f64::NAN,
                converged: false,
                error: None,
            };
            match solve_cell(geometry, kappa, b, opts) {
                Ok((problem, state, converged)) => {
                    let ell = (opts.ell_lengths * magnetic_length(kappa, b)).min(0.99 * geometry.half_distance());
                    let k2 = kappa * kappa;
                    let pts = &problem.mesh.lattice.points;
                    let mut carriers = 0;
                    for c in &geometry.endpoints {
                        let (mut mass, mut sup) = (0.0, 0.0_f64);
                        for (n, p) in pts.iter().enumerate() {
                            if dist(*p, *c) <= ell {
                                let r2 = state.psi[n].norm_sqr();
                                mass += k2 * problem.mesh.lattice.mass[n] * r2 * r2;
                                sup = sup.max(r2.sqrt());
                            }
                        }
                        row.masses.push(mass);
                        if sup >= opts.carrier_threshold {
                            carriers += 1;
                        }
                    }
                    row.regime = match carriers {
                        0 => Regime::Normal,
                        c if c == geometry.endpoints.len() => Regime::NearAllPoints,
                        _ => Regime::Partial,
                    };
                    row.e_gst = state.energy;
                    row.sup_psi = state.psi.iter().map(|v| v.norm()).fold(0.0, f64::max);
                    row.converged = converged;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            rows.push(row);
        }
    }
    rows
}

/// Flat table with columns `kappa,b,regime,T,mass_j...,E_gst`.
pub fn phase_table_csv(rows: &[PhaseRow]) -> String {
    let n = rows.iter().map(|r| r.masses.len()).max().unwrap_or(0);
    let mut out = String::from("kappa,b,regime,T");
    for j in 0..n {
        out.push_str(&format!(",mass_{}", j + 1));
    }
    out.push_str(",E_gst\n");
    for r in rows {
        let t: Vec<String> = r.active.iter().map(|j| (j + 1).to_string()).collect();
        out.push_str(&format!("{},{},{},{}", r.kappa, r.b, r.regime.label(), t.join(" ")));
        for j in 0..n {
            match r.masses.get(j) {
                Some(m) => out.push_str(&format!(",{m:e}")),
                None => out.push(','),
            }
        }
        out.push_str(&format!(",{:e}\n", r.e_gst));
    }
    out
}
