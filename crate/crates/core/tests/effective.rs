use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stepgl::effective::*;
use stepgl::halfplane::{HalfDiskMesh, WedgeParams};
use stepgl::lattice::VectorPotential;
use stepgl::optim::StopReason;
use stepgl::spectral1d::theta0_cache;
use stepgl::Error;

const B_MID: f64 = 1.828;

fn theta0() -> f64 {
    theta0_cache().get_or_compute(1e-6).unwrap()
}

fn diameter() -> WedgeParams {
    WedgeParams::new(FRAC_PI_2, -1.0).unwrap()
}

fn problem(b: f64, radius: f64, spacing: f64) -> EffectiveProblem {
    theta0();
    let mesh = HalfDiskMesh::new(radius, spacing, FRAC_PI_2).unwrap();
    EffectiveProblem::new(b, diameter(), mesh).unwrap()
}

/// Mid-window minimizer on a radius-10 half-disk, shared by several tests.
fn shared() -> &'static (EffectiveProblem, MinimizerResult) {
    static CELL: OnceLock<(EffectiveProblem, MinimizerResult)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = problem(B_MID, 10.0, 0.1);
        let r = minimize_j(&p, &MinimizeOptions::for_mesh(&p.mesh)).unwrap();
        (p, r)
    })
}

fn bump(mesh: &HalfDiskMesh, center: [f64; 2]) -> Vec<Complex64> {
    mesh.lattice
        .points
        .iter()
        .map(|p| {
            let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
            Complex64::from_polar((-d2 / 4.0).exp(), 0.3 * p[0] + 0.2 * p[1] * p[1])
        })
        .collect()
}

#[test]
fn zero_state_has_zero_energy() {
    let p = problem(B_MID, 4.0, 0.1);
    let v = evaluate_j(&vec![Complex64::new(0.0, 0.0); p.mesh.len()], &p).unwrap();
    assert_eq!(v.energy, 0.0);
    assert_eq!(v.breakdown.kinetic, 0.0);
    assert_eq!(v.breakdown.quadratic, 0.0);
    assert_eq!(v.breakdown.quartic, 0.0);
}

#[test]
fn scaled_eigenfunction_follows_the_quartic_polynomial() {
    let p = problem(B_MID, 6.0, 0.1);
    let g = p.ground_state().unwrap().clone();
    let l4 = p.mesh.lattice.quartic(&g.eigenvector);
    let poly = |s: f64| s * s * (B_MID * g.eigenvalue - 1.0) + 0.5 * s.powi(4) * l4;
    for s in [0.1, 0.5, 1.0, 2.0] {
        let u: Vec<Complex64> = g.eigenvector.iter().map(|v| v * s).collect();
        let e = p.evaluate(&u).unwrap().energy;
        assert!(
            (e - poly(s)).abs() < 1e-8 * poly(s).abs().max(1.0),
            "s = {s}: {e} vs {}",
            poly(s)
        );
    }
    let best = eigen_test_state(&p).unwrap();
    let e = p.evaluate(&best).unwrap().energy;
    let analytic = -(1.0 - B_MID * g.eigenvalue).powi(2) / (2.0 * l4);
    assert!((e - analytic).abs() < 1e-8 * analytic.abs(), "{e} vs {analytic}");
    let s = optimal_amplitude(B_MID, g.eigenvalue, l4);
    for f in [0.99, 1.01] {
        assert!(poly(s * f) > e);
    }
    assert_eq!(optimal_amplitude(2.0, 0.6, 1.0), 0.0);
}

#[test]
fn functional_matches_an_independent_quadrature() {
    let p = problem(2.0, 5.0, 0.1);
    let u = bump(&p.mesh, [0.7, 1.1]);
    let pot = diameter().potential();
    // Three-point Gauss–Legendre is exact for the piecewise linear potential
    // on links that do not cross the edge.
    let gauss = [
        (-(0.6_f64).sqrt(), 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        ((0.6_f64).sqrt(), 5.0 / 9.0),
    ];
    let pts = &p.mesh.lattice.points;
    let mut kinetic = 0.0;
    for l in &p.mesh.lattice.links {
        let (xa, xb) = (pts[l.a as usize], pts[l.b as usize]);
        let d = [xb[0] - xa[0], xb[1] - xa[1]];
        let theta: f64 = gauss
            .iter()
            .map(|&(t, w)| {
                let s = 0.5 * (t + 1.0);
                let a = pot.eval([xa[0] + s * d[0], xa[1] + s * d[1]]);
                0.5 * w * (a[0] * d[0] + a[1] * d[1])
            })
            .sum();
        let diff = u[l.b as usize] - Complex64::from_polar(1.0, theta) * u[l.a as usize];
        kinetic += l.weight * diff.norm_sqr();
    }
    for d in &p.mesh.lattice.dirichlet {
        kinetic += d.weight * u[d.a as usize].norm_sqr();
    }
    let m = &p.mesh.lattice.mass;
    let quadratic: f64 = u.iter().zip(m).map(|(v, m)| m * v.norm_sqr()).sum();
    let quartic: f64 = u.iter().zip(m).map(|(v, m)| 0.5 * m * v.norm_sqr().powi(2)).sum();
    let oracle = 2.0 * kinetic - quadratic + quartic;
    let v = evaluate_j(&u, &p).unwrap();
    assert!(
        (v.energy - oracle).abs() < 1e-8 * oracle.abs(),
        "{} vs {oracle}",
        v.energy
    );
    assert!((v.breakdown.kinetic - 2.0 * kinetic).abs() < 1e-10 * kinetic);
}

#[test]
fn gradient_matches_central_differences() {
    let p = problem(B_MID, 5.0, 0.1);
    let u = eigen_test_state(&p).unwrap();
    let g = p.gradient(&u).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let d: Vec<Complex64> = (0..u.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 0.1)
            .collect();
        let eps = 1e-5;
        let shifted = |t: f64| -> f64 {
            let w: Vec<Complex64> = u.iter().zip(&d).map(|(x, y)| x + y * t).collect();
            p.evaluate(&w).unwrap().energy
        };
        let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
        let analytic: f64 = g.iter().zip(&d).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
        assert!(
            (fd - analytic).abs() < 1e-5 * analytic.abs().max(1e-3),
            "{fd} vs {analytic}"
        );
    }
}

#[test]
fn minimizer_satisfies_its_invariants() {
    let (p, r) = shared();
    assert!(r.converged, "{:?} after {}", r.stop, r.iterations);
    assert!(!r.trivial);
    assert!(r.energy < -1e-4, "{}", r.energy);
    let b = &r.breakdown;
    assert!((r.energy - (b.kinetic - b.quadratic + b.quartic)).abs() <= 1e-12 * b.kinetic);
    let again = p.evaluate(&r.state).unwrap();
    assert_eq!(again.energy, r.energy);
    assert!(r.sup_norm <= 1.0 + 1e-8);
    let n = p.mesh.len() as f64;
    match r.stop {
        StopReason::GradientTolerance => assert!(r.grad_norm <= 1e-11 * n),
        StopReason::EnergyStalled => assert!(r.grad_norm <= 1e-8 * n, "{}", r.grad_norm),
        other => panic!("converged with {other:?}"),
    }
    let start = p.evaluate(&eigen_test_state(p).unwrap()).unwrap().energy;
    assert!(r.energy <= start);
}

#[test]
fn descent_trace_never_increases() {
    let (_, r) = shared();
    assert!(r.trace.len() > 10);
    for w in r.trace.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn seeded_starts_reach_the_same_energy() {
    let (p, r) = shared();
    for seed in [1, 2] {
        let opts = MinimizeOptions {
            init: Init::Seeded(seed),
            ..MinimizeOptions::for_mesh(&p.mesh)
        };
        let s = minimize_j(p, &opts).unwrap();
        assert!(
            (s.energy - r.energy).abs() < 1e-6,
            "seed {seed}: {} vs {}",
            s.energy,
            r.energy
        );
    }
}

#[test]
fn minimizer_decays_exponentially() {
    let (p, r) = shared();
    let fit = decay_fit(r, &p.mesh).unwrap();
    assert!(fit.delta > 0.0, "{fit:?}");
    assert!(fit.quality >= 0.95, "{fit:?}");
}

#[test]
fn localization_lower_bounds_hold_away_from_the_edge() {
    let (p, r) = shared();
    let a = p.wedge.a.abs();
    // Supported away from the edge and the boundary: bulk Landau level.
    let bulk = cutoff_rayleigh_quotient(p, &r.state, |x| {
        smooth_step((x[0].abs() - 1.0) / 2.0) * smooth_step((x[1] - 1.0) / 2.0)
    })
    .unwrap();
    assert!(bulk >= a - 0.05, "{bulk}");
    // Supported away from the edge only: boundary de Gennes level.
    let boundary = cutoff_rayleigh_quotient(p, &r.state, |x| smooth_step((x[0].abs() - 1.0) / 2.0)).unwrap();
    assert!(boundary >= a * theta0() - 0.05, "{boundary}");
    // The uncut state sees the edge and goes below both.
    let whole = cutoff_rayleigh_quotient(p, &r.state, |_| 1.0).unwrap();
    assert!(whole < a * theta0(), "{whole}");
}

#[test]
fn energy_converges_at_first_order_in_the_spacing() {
    let energies: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&h| {
            let p = problem(B_MID, 6.0, h);
            minimize_j(&p, &MinimizeOptions::for_mesh(&p.mesh)).unwrap().energy
        })
        .collect();
    let ratio = (energies[0] - energies[1]) / (energies[1] - energies[2]);
    assert!(ratio >= 1.7, "{energies:?}: {ratio}");
}

#[test]
fn trivial_regime_beyond_the_spectral_threshold() {
    let p = problem(B_MID, 6.0, 0.2);
    let mu = p.ground_state().unwrap().eigenvalue;
    let q = p.with_b(1.05 / mu).unwrap();
    let r = minimize_j(&q, &MinimizeOptions::for_mesh(&q.mesh)).unwrap();
    assert!(r.trivial);
    assert!(r.energy.abs() < 1e-6, "{}", r.energy);
    assert!(r.sup_norm <= 1e-3, "{}", r.sup_norm);
    assert!(matches!(decay_fit(&r, &q.mesh), Err(Error::NoDecay(_))));
}

#[test]
fn small_curve_has_the_sign_structure() {
    let p = problem(B_MID, 6.0, 0.2);
    let mu = p.ground_state().unwrap().eigenvalue;
    let lo = 1.01 / theta0();
    let hi = 1.2 / mu;
    let grid: Vec<f64> = (0..6).map(|k| lo + (hi - lo) * k as f64 / 5.0).collect();
    let curve = energy_curve(diameter(), &grid, p.mesh.clone()).unwrap();
    assert!(curve.all_converged);
    for w in curve.e_values.windows(2) {
        assert!(w[1] >= w[0] - 1e-10, "{:?}", curve.e_values);
    }
    for (b, e) in curve.b_values.iter().zip(&curve.e_values) {
        if *b * mu < 0.98 {
            assert!(*e < -1e-4, "b = {b}: {e}");
        } else if *b * mu > 1.02 {
            assert!(e.abs() < 1e-6, "b = {b}: {e}");
        }
    }
    let t = curve.threshold_estimate.unwrap();
    assert!((t * mu - 1.0).abs() < 0.02, "{t} vs {}", 1.0 / mu);
    let csv = curve.to_csv();
    assert_eq!(csv.lines().next(), Some("b,E,converged,iterations,delta"));
    assert_eq!(csv.lines().count(), grid.len() + 1);
}

#[test]
fn invalid_inputs_are_rejected() {
    theta0();
    let mesh = HalfDiskMesh::new(4.0, 0.2, FRAC_PI_2).unwrap();
    assert!(EffectiveProblem::new(1.0, diameter(), mesh.clone()).is_err());
    assert!(energy_curve(diameter(), &[], mesh.clone()).is_err());
    assert!(energy_curve(diameter(), &[1.9, 1.8], mesh.clone()).is_err());
    let p = EffectiveProblem::new(B_MID, diameter(), mesh).unwrap();
    assert!(matches!(
        p.evaluate(&[Complex64::new(1.0, 0.0)]),
        Err(Error::MeshMismatch { .. })
    ));
}
