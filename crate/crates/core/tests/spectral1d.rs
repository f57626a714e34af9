mod support;

use stepgl::spectral1d::{compute_beta, compute_theta0, degennes_fiber_eigenvalue, step_fiber_eigenvalue, Grid1D};
use support::galerkin;

// Frozen from the cosine-Galerkin oracle (L = 14, 600 modes).
const THETA0_ORACLE: f64 = 0.590_106_125_15;
const LAMBDA_AT_07709: f64 = 0.590_110_441_33;

#[test]
fn oracle_reproduces_analytic_gaussian() {
    assert!((galerkin::degennes(0.0, 12.0, 300) - 1.0).abs() < 1e-10);
    assert!((galerkin::step(1.0, 0.3, 14.0, 300) - 1.0).abs() < 1e-10);
}

#[test]
fn fiber_near_minimum_matches_dense_oracle() {
    let grid = Grid1D::new(0.0, 12.0, 12001).unwrap();
    let fd = degennes_fiber_eigenvalue(0.7709, &grid).unwrap();
    assert!((fd - LAMBDA_AT_07709).abs() < 1e-6, "{fd}");
    assert!((galerkin::degennes(0.7709, 12.0, 400) - LAMBDA_AT_07709).abs() < 1e-9);
}

#[test]
fn theta0_matches_reported_value_and_oracle() {
    let coarse = compute_theta0(1e-3).unwrap();
    assert!((coarse.minimum - 0.59).abs() < 5e-3);

    let fine = compute_theta0(1e-6).unwrap();
    let oracle = galerkin::degennes(fine.minimizing_xi, 14.0, 600);
    assert!((fine.minimum - oracle).abs() < 1e-6, "{} vs {oracle}", fine.minimum);
    assert!((fine.minimum - THETA0_ORACLE).abs() < 1e-6);
    // Minimizer identity of the de Gennes band: λ(ξ*) = ξ*².
    assert!((fine.minimum - fine.minimizing_xi.powi(2)).abs() < 1e-4);
    assert!(fine.minimum > 0.0 && fine.minimum < 1.0);
    assert!(fine.lambda_values.iter().all(|&l| l >= fine.minimum - 1e-9));
}

#[test]
fn step_fiber_values_match_oracle() {
    let grid = Grid1D::new(-16.0, 16.0, 16001).unwrap();
    let fd = step_fiber_eigenvalue(-1.0, 0.0, &grid).unwrap();
    let oracle = galerkin::step(-1.0, 0.0, 16.0, 400);
    assert!((fd - oracle).abs() < 1e-5, "{fd} vs {oracle}");
    assert!(fd <= 1.0 + 1e-9);

    let fd = step_fiber_eigenvalue(-0.25, 1.0, &grid).unwrap();
    let oracle = galerkin::step(-0.25, 1.0, 16.0, 400);
    assert!((fd - oracle).abs() < 1e-5, "{fd} vs {oracle}");
}

#[test]
fn step_fiber_limits_are_landau_levels() {
    // Well at t = xi / a on the a-side.
    let grid = Grid1D::new(-26.0, 26.0, 10401).unwrap();
    let l = step_fiber_eigenvalue(0.5, -8.0, &grid).unwrap();
    assert!((l - 0.5).abs() < 2e-2, "{l}");
    let l = step_fiber_eigenvalue(0.5, 8.0, &grid).unwrap();
    assert!((l - 1.0).abs() < 2e-2, "{l}");
}

#[test]
fn beta_thresholds_respect_ordering() {
    let theta0 = THETA0_ORACLE;
    let tol = 1e-5;
    let b = compute_beta(-1.0, tol).unwrap();
    assert!(b.minimum < 1.0);
    assert!(b.minimum >= theta0 - tol);
    // Symmetric potential: the even sector is the Neumann de Gennes fiber.
    assert!((b.minimum - theta0).abs() < 1e-5, "{}", b.minimum);

    let b = compute_beta(0.5, tol).unwrap();
    assert!(b.minimum >= 0.5 * theta0 - tol);
    assert!(b.minimum <= 1.0);

    let b = compute_beta(-0.25, tol).unwrap();
    assert!(b.minimum >= 0.25 * theta0 - tol && b.minimum <= 1.0);
    let oracle = galerkin::step(-0.25, b.minimizing_xi, 30.0, 700);
    assert!((b.minimum - oracle).abs() < 1e-4, "{} vs {oracle}", b.minimum);
}

#[test]
fn beta_minimum_is_stable_under_grid_doubling() {
    let b = compute_beta(-0.25, 1e-4).unwrap();
    let half = 30.0;
    let g = Grid1D::new(-half, half, 6001).unwrap();
    let l1 = step_fiber_eigenvalue(-0.25, b.minimizing_xi, &g).unwrap();
    let l2 = step_fiber_eigenvalue(-0.25, b.minimizing_xi, &g.refined()).unwrap();
    assert!((l1 - l2).abs() < 1e-4);
}

#[test]
fn curve_exports_csv() {
    let c = compute_theta0(1e-3).unwrap();
    let csv = c.to_csv();
    assert!(csv.starts_with("xi,lambda\n"));
    assert_eq!(csv.lines().count(), c.xi_values.len() + 1);
}
