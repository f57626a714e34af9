//! Effective half-plane functional
//!
//! ```text
//! J(u) = ∫ b |(∇ − i A_{α,a}) u|² − |u|² + ½ |u|⁴
//! ```
//!
//! on the truncated half-disk, its minimization, the energy curve in `b` and
//! the exponential decay of minimizers.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::halfplane::{
    assemble_magnetic_laplacian, compute_mu_on_mesh, essential_floor, HalfDiskMesh, SpectralResult, WedgeParams,
    DEFAULT_TOL,
};
use crate::lattice::{zeros, MagneticOperator};
use crate::optim::{minimize, DescentOptions, Objective, StopReason};

/// Minimized energies above this value count as the trivial minimizer.
pub const ZERO_ENERGY: f64 = -1e-8;

/// `J_{b,α,a}` on a fixed half-disk mesh.
#[derive(Debug, Clone)]
pub struct EffectiveProblem {
    pub b: f64,
    pub wedge: WedgeParams,
    pub mesh: HalfDiskMesh,
    op: MagneticOperator,
    ground: OnceLock<SpectralResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JBreakdown {
    /// `b Σ |(∇ − iA) u|²`.
    pub kinetic: f64,
    /// `Σ m |u|²`.
    pub quadratic: f64,
    /// `½ Σ m |u|⁴`.
    pub quartic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JValue {
    pub energy: f64,
    pub breakdown: JBreakdown,
}

impl EffectiveProblem {
    /// Requires `b > 1/(|a| Θ₀)`, so the cached de Gennes constant must exist.
    pub fn new(b: f64, wedge: WedgeParams, mesh: HalfDiskMesh) -> Result<Self> {
        let floor = essential_floor(wedge.a)?;
        if !(b * floor > 1.0) {
            return Err(invalid(
                "b",
                format!("b = {b} is not above 1/(|a|Θ₀) = {}", 1.0 / floor),
            ));
        }
        Self::unchecked(b, wedge, mesh)
    }

    /// Any `b > 0`; used for checks outside the concentration regime.
    pub fn unchecked(b: f64, wedge: WedgeParams, mesh: HalfDiskMesh) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid("b", format!("b = {b} must be positive")));
        }
        let op = assemble_magnetic_laplacian(&wedge, &mesh, 1.0)?;
        Ok(Self {
            b,
            wedge,
            mesh,
            op,
            ground: OnceLock::new(),
        })
    }

    /// Same mesh and operator at another `b`; the ground state is shared.
    pub fn with_b(&self, b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid("b", format!("b = {b} must be positive")));
        }
        let mut p = self.clone();
        p.b = b;
        Ok(p)
    }

    pub fn operator(&self) -> &MagneticOperator {
        &self.op
    }

    /// Lowest eigenpair of the magnetic Laplacian on this mesh.
    pub fn ground_state(&self) -> Result<&SpectralResult> {
        if let Some(g) = self.ground.get() {
            return Ok(g);
        }
        let g = compute_mu_on_mesh(&self.wedge, &self.mesh, DEFAULT_TOL)?;
        Ok(self.ground.get_or_init(|| g))
    }

    fn check_len(&self, u: &[Complex64]) -> Result<()> {
        if u.len() != self.mesh.len() {
            return Err(Error::MeshMismatch {
                expected: self.mesh.len(),
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, u: &[Complex64]) -> Result<JValue> {
        self.check_len(u)?;
        Ok(self.value(u))
    }

    fn value(&self, u: &[Complex64]) -> JValue {
        let lat = &self.mesh.lattice;
        let kinetic = self.b * self.op.energy(u);
        let quadratic = lat.norm_sqr(u);
        let quartic = 0.5 * lat.quartic(u);
        JValue {
            energy: kinetic - quadratic + quartic,
            breakdown: JBreakdown {
                kinetic,
                quadratic,
                quartic,
            },
        }
    }

    /// Gradient `2 b K u − 2 M u + 2 M |u|² u`.
    pub fn gradient(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(u)?;
        Ok(self.grad(u))
    }

    fn grad(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut g = zeros(u.len());
        self.op.apply(u, &mut g);
        for ((gi, ui), m) in g.iter_mut().zip(u).zip(&self.mesh.lattice.mass) {
            *gi = 2.0 * (*gi * self.b + ui * (m * (ui.norm_sqr() - 1.0)));
        }
        g
    }

    /// `L²` norm of the Riesz representative of a gradient, `(Σ |g|²/m)^{1/2}`.
    pub fn gradient_norm(&self, g: &[Complex64]) -> f64 {
        g.iter()
            .zip(&self.mesh.lattice.mass)
            .map(|(v, m)| v.norm_sqr() / m)
            .sum::<f64>()
            .sqrt()
    }
}

/// `J` of the quadrature on the problem mesh.
pub fn evaluate_j(u: &[Complex64], problem: &EffectiveProblem) -> Result<JValue> {
    problem.evaluate(u)
}

struct JObjective<'a> {
    problem: &'a EffectiveProblem,
    inv_diag: Vec<f64>,
}

impl Objective for JObjective<'_> {
    fn eval(&mut self, u: &[Complex64]) -> (f64, Vec<Complex64>) {
        (self.problem.value(u).energy, self.problem.grad(u))
    }

    fn precondition(&mut self, g: &[Complex64]) -> Vec<Complex64> {
        g.iter().zip(&self.inv_diag).map(|(v, d)| v * d).collect()
    }

    fn grad_norm(&self, g: &[Complex64]) -> f64 {
        self.problem.gradient_norm(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Init {
    /// Ground eigenfunction scaled by the optimal amplitude.
    Eigen,
    /// Eigenfunction shape with a random phase, scale and multiplicative
    /// perturbation drawn from the seed.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MinimizeOptions {
    pub init: Init,
    pub descent: DescentOptions,
}

impl MinimizeOptions {
    /// Stopping rule `grad_norm ≤ 1e−11 · node count`.
    pub fn for_mesh(mesh: &HalfDiskMesh) -> Self {
        Self {
            init: Init::Eigen,
            descent: DescentOptions {
                grad_tol: 1e-11 * mesh.len() as f64,
                max_iter: 50_000,
                ..DescentOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizerResult {
    #[serde(skip)]
    pub state: Vec<Complex64>,
    pub energy: f64,
    pub breakdown: JBreakdown,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub stop: StopReason,
    pub sup_norm: f64,
    /// Energy above `ZERO_ENERGY`.
    pub trivial: bool,
    pub b: f64,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Amplitude `s` minimizing `J(s u₀)` for the normalized ground state `u₀`:
/// `s² = (1 − b μ_h) / Σ m |u₀|⁴`, or zero when `b μ_h ≥ 1`.
pub fn optimal_amplitude(b: f64, mu: f64, l4: f64) -> f64 {
    ((1.0 - b * mu) / l4).max(0.0).sqrt()
}

/// Scaled ground state `s u₀` with the optimal amplitude.
pub fn eigen_test_state(problem: &EffectiveProblem) -> Result<Vec<Complex64>> {
    let g = problem.ground_state()?;
    let l4 = problem.mesh.lattice.quartic(&g.eigenvector);
    let s = optimal_amplitude(problem.b, g.eigenvalue, l4);
    Ok(g.eigenvector.iter().map(|v| v * s).collect())
}

fn initial_state(problem: &EffectiveProblem, init: Init) -> Result<Vec<Complex64>> {
    let base = eigen_test_state(problem)?;
    match init {
        Init::Eigen => Ok(base),
        Init::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phase = Complex64::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(0.0..std::f64::consts::TAU));
            Ok(base
                .iter()
                .map(|v| v * phase * (1.0 + rng.gen_range(-0.3..0.3)))
                .collect())
        }
    }
}

/// Minimizes `J` from the requested initial state.
pub fn minimize_j(problem: &EffectiveProblem, opts: &MinimizeOptions) -> Result<MinimizerResult> {
    let start = initial_state(problem, opts.init)?;
    minimize_j_from(problem, start, opts)
}

/// Minimizes `J` from `start`.
pub fn minimize_j_from(
    problem: &EffectiveProblem,
    start: Vec<Complex64>,
    opts: &MinimizeOptions,
) -> Result<MinimizerResult> {
    problem.check_len(&start)?;
    let inv_diag = problem
        .op
        .diag
        .iter()
        .zip(&problem.mesh.lattice.mass)
        .map(|(d, m)| 1.0 / (2.0 * (problem.b * d + m)))
        .collect();
    let mut obj = JObjective { problem, inv_diag };
    let mut u = start;
    let rep = minimize(&mut obj, &mut u, &opts.descent);
    let value = problem.value(&u);
    let sup_norm = u.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(MinimizerResult {
        energy: value.energy,
        breakdown: value.breakdown,
        iterations: rep.iterations,
        grad_norm: rep.grad_norm,
        converged: rep.converged,
        stop: rep.reason,
        sup_norm,
        trivial: value.energy > ZERO_ENERGY,
        b: problem.b,
        trace: rep.trace,
        state: u,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyCurve {
    pub b_values: Vec<f64>,
    pub e_values: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    /// Fitted decay rate of each nontrivial minimizer.
    pub deltas: Vec<Option<f64>>,
    /// First sampled `b` whose minimized energy is trivial.
    pub first_trivial_b: Option<f64>,
    /// Onset of `E = 0`, refined by bisection between the last nontrivial
    /// and the first trivial sample.
    pub threshold_estimate: Option<f64>,
    /// Every point converged.
    pub all_converged: bool,
}

impl EnergyCurve {
    /// Columns `b,E,converged,iterations,delta`; `delta` is empty for
    /// trivial minimizers.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("b,E,converged,iterations,delta\n");
        for i in 0..self.b_values.len() {
            let delta = self.deltas[i].map(|d| d.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.b_values[i], self.e_values[i], self.converged[i], self.iterations[i], delta
            ));
        }
        s
    }
}

/// Minimized energies along `b_grid` with warm starts, plus the threshold.
pub fn energy_curve(wedge: WedgeParams, b_grid: &[f64], mesh: HalfDiskMesh) -> Result<EnergyCurve> {
    if b_grid.is_empty() {
        return Err(invalid("b_grid", "empty"));
    }
    if b_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("b_grid", "must be strictly increasing"));
    }
    let opts = MinimizeOptions::for_mesh(&mesh);
    let base = EffectiveProblem::new(b_grid[0], wedge, mesh)?;
    let mut warm: Option<Vec<Complex64>> = None;
    let mut curve = EnergyCurve {
        b_values: Vec::new(),
        e_values: Vec::new(),
        converged: Vec::new(),
        iterations: Vec::new(),
        deltas: Vec::new(),
        first_trivial_b: None,
        threshold_estimate: None,
        all_converged: true,
    };
    let mut last_nontrivial: Option<f64> = None;
    for &b in b_grid {
        let problem = base.with_b(b)?;
        let result = solve_warm(&problem, warm.take(), &opts)?;
        curve.b_values.push(b);
        curve.e_values.push(result.energy);
        curve.converged.push(result.converged);
        curve.iterations.push(result.iterations);
        curve
            .deltas
            .push(decay_fit(&result, &problem.mesh).ok().map(|f| f.delta));
        curve.all_converged &= result.converged;
        if result.trivial {
            if curve.first_trivial_b.is_none() {
                curve.first_trivial_b = Some(b);
            }
        } else {
            last_nontrivial = Some(b);
        }
        warm = Some(result.state);
    }
    if let (Some(lo), Some(hi)) = (last_nontrivial, curve.first_trivial_b) {
        if lo < hi {
            curve.threshold_estimate = Some(bisect_threshold(&base, lo, hi, &opts)?);
        }
    }
    Ok(curve)
}

/// Better of the warm start and the scaled eigenfunction, then minimized.
fn solve_warm(
    problem: &EffectiveProblem,
    warm: Option<Vec<Complex64>>,
    opts: &MinimizeOptions,
) -> Result<MinimizerResult> {
    let eigen = eigen_test_state(problem)?;
    let start = match warm {
        Some(w) if problem.value(&w).energy < problem.value(&eigen).energy => w,
        _ => eigen,
    };
    minimize_j_from(problem, start, opts)
}

/// Bisection on the trivial/nontrivial dichotomy to relative width `1e−4`.
fn bisect_threshold(base: &EffectiveProblem, mut lo: f64, mut hi: f64, opts: &MinimizeOptions) -> Result<f64> {
    while (hi - lo) > 1e-4 * hi {
        let mid = 0.5 * (lo + hi);
        let r = solve_warm(&base.with_b(mid)?, None, opts)?;
        if r.trivial {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    pub delta: f64,
    /// Coefficient of determination of the log-linear fit.
    pub quality: f64,
    pub shells: usize,
}

/// Fits `log max_{|x|≈r} |u|` against `r` over `r ∈ [R/4, 3R/4]`.
pub fn decay_fit(result: &MinimizerResult, mesh: &HalfDiskMesh) -> Result<DecayFit> {
    if result.trivial {
        return Err(Error::NoDecay(format!(
            "minimized energy {} is trivial; nothing decays",
            result.energy
        )));
    }
    if result.state.len() != mesh.len() {
        return Err(Error::MeshMismatch {
            expected: mesh.len(),
            got: result.state.len(),
        });
    }
    let (r0, r1) = (0.25 * mesh.radius, 0.75 * mesh.radius);
    let shells = 20;
    let width = (r1 - r0) / shells as f64;
    let mut best = vec![(0.0_f64, 0.0_f64); shells];
    for (p, v) in mesh.lattice.points.iter().zip(&result.state) {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if r < r0 || r >= r1 {
            continue;
        }
        let k = (((r - r0) / width) as usize).min(shells - 1);
        if v.norm() > best[k].1 {
            best[k] = (r, v.norm());
        }
    }
    let pts: Vec<(f64, f64)> = best
        .into_iter()
        .filter(|&(_, m)| m > 0.0)
        .map(|(r, m)| (r, m.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::NoDecay("fewer than three nonzero shells".into()));
    }
    let (slope, r2) = linear_fit(&pts);
    Ok(DecayFit {
        delta: -slope,
        quality: r2,
        shells: pts.len(),
    })
}

/// Least-squares slope and coefficient of determination.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// Rayleigh quotient `Q(χu) / ‖χu‖²` of the unscaled magnetic form.
pub fn cutoff_rayleigh_quotient(
    problem: &EffectiveProblem,
    u: &[Complex64],
    cutoff: impl Fn([f64; 2]) -> f64,
) -> Result<f64> {
    problem.check_len(u)?;
    let v: Vec<Complex64> = u
        .iter()
        .zip(&problem.mesh.lattice.points)
        .map(|(x, &p)| x * cutoff(p))
        .collect();
    let n = problem.mesh.lattice.norm_sqr(&v);
    if n == 0.0 {
        return Err(invalid("cutoff", "cutoff annihilates the state"));
    }
    Ok(problem.op.energy(&v) / n)
}

/// Smooth step from 0 at `t ≤ 0` to 1 at `t ≥ 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let s = (std::f64::consts::FRAC_PI_2 * t).sin();
        s * s
    }
}
