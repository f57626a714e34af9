//! Command execution. Every command emits one or more records and reports
//! whether any sub-run failed.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use stepgl::diagnostics::{
    calibrated_ell, concentration_report, critical_fields, phase_diagram, phase_table_csv, PhaseOptions, PhaseRow,
};
use stepgl::effective::{decay_fit, energy_curve, minimize_j, EffectiveProblem, MinimizeOptions};
use stepgl::gldomain::{
    apriori_check, build_geometry, effective_test_state, gl_mesh, gl_residual, minimize_gl, seed_state, GlMeshOptions,
    GlMinimizer, GlOptions, GlProblem, StepFieldGeometry, TestState,
};
use stepgl::halfplane::{
    bound_state_from, compute_mu, compute_mu_on_mesh, BoundStateReport, HalfDiskMesh, SpectralResult, WedgeParams,
    DEFAULT_RADIUS, DEFAULT_SPACING, DEFAULT_TOL,
};
use stepgl::io::{gl_state_grid, halfdisk_grid, GridFile};
use stepgl::spectral1d::{compute_beta, compute_theta0, theta0_cache};

use crate::config::{Command, RunConfig};
use crate::record::{RecordWriter, ResultRecord, Status};

/// Tolerance of the de Gennes constant used as the essential floor.
pub const THETA0_TOL: f64 = 1e-6;
/// Default effective-model mesh for energy curves.
pub const CURVE_RADIUS: f64 = 15.0;
pub const CURVE_SPACING: f64 = 0.1;
/// Neighbourhoods span this many magnetic lengths at `κ = 10`.
pub const ELL_LENGTHS: f64 = 8.0;
pub const ELL_KAPPA_MIN: f64 = 10.0;

/// Outcome of a whole command.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<ResultRecord>,
    pub records_path: PathBuf,
}

impl RunSummary {
    pub fn failed(&self) -> bool {
        self.records.iter().any(|r| r.status == Status::Failed)
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    writer: RecordWriter,
    records: Vec<ResultRecord>,
}

impl Ctx<'_> {
    fn emit(&mut self, record: ResultRecord) -> Result<(), String> {
        self.writer
            .write(&record)
            .map_err(|e| format!("{}: {e}", self.writer.path().display()))?;
        self.records.push(record);
        Ok(())
    }

    fn file_name(&self, suffix: &str) -> String {
        format!("{}-{suffix}", self.cfg.tag())
    }

    fn write_text(&self, rec: &mut ResultRecord, key: &str, suffix: &str, text: &str) -> Result<(), String> {
        let name = self.file_name(suffix);
        let path = self.dir.join(&name);
        std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
        rec.files.insert(key.to_string(), name);
        Ok(())
    }

    fn write_grid(&self, rec: &mut ResultRecord, key: &str, suffix: &str, grid: &GridFile) -> Result<(), String> {
        let name = self.file_name(suffix);
        grid.write(&self.dir.join(&name)).map_err(|e| e.to_string())?;
        rec.files.insert(key.to_string(), name);
        Ok(())
    }

    fn save_fields(&self, default: bool) -> bool {
        self.cfg.params.save_fields.unwrap_or(default)
    }
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Runs `cfg`, appending records to `<out>/records.jsonl`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, String> {
    let dir = cfg.out_dir();
    let writer = RecordWriter::open(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let records_path = writer.path().to_path_buf();
    let mut ctx = Ctx {
        cfg,
        dir,
        writer,
        records: Vec::new(),
    };
    match cfg.command {
        Command::Theta0 => theta0(&mut ctx)?,
        Command::Beta => beta(&mut ctx)?,
        Command::Mu => mu(&mut ctx)?,
        Command::EffEnergy => eff_energy(&mut ctx)?,
        Command::GlSolve => gl_solve(&mut ctx)?,
        Command::Verify => verify(&mut ctx)?,
        Command::PhaseDiagram => phase(&mut ctx)?,
    }
    Ok(RunSummary {
        records: ctx.records,
        records_path,
    })
}

fn ensure_theta0() -> stepgl::Result<f64> {
    theta0_cache().get_or_compute(THETA0_TOL)
}

fn theta0(ctx: &mut Ctx) -> Result<(), String> {
    let tol = ctx.cfg.params.tol.unwrap_or(1e-6);
    let mut rec = ResultRecord::new(ctx.cfg, "theta0");
    let t = Instant::now();
    match compute_theta0(tol) {
        Ok(curve) => {
            rec.put("minimum", curve.minimum)
                .put("minimizing_xi", curve.minimizing_xi)
                .put("grid_nodes", curve.grid_nodes);
            ctx.write_text(&mut rec, "curve", "curve.csv", &curve.to_csv())?;
        }
        Err(e) => {
            rec.fail(e);
        }
    }
    rec.timings.insert("total".into(), seconds(t));
    ctx.emit(rec)
}

fn beta(ctx: &mut Ctx) -> Result<(), String> {
    let p = &ctx.cfg.params;
    let (a, tol) = (p.a.expect("validated"), p.tol.unwrap_or(1e-6));
    let mut rec = ResultRecord::new(ctx.cfg, "beta");
    let t = Instant::now();
    let result = compute_beta(a, tol).and_then(|c| Ok((c, theta0_cache().get_or_compute(tol)?)));
    match result {
        Ok((curve, theta0)) => {
            let floor = a.abs() * theta0;
            rec.put("minimum", curve.minimum)
                .put("minimizing_xi", curve.minimizing_xi)
                .put("essential_floor", floor)
                .put("above_floor", curve.minimum >= floor - tol);
            ctx.write_text(&mut rec, "curve", "curve.csv", &curve.to_csv())?;
        }
        Err(e) => {
            rec.fail(e);
        }
    }
    rec.timings.insert("total".into(), seconds(t));
    ctx.emit(rec)
}

struct MuRun {
    fine: SpectralResult,
    report: BoundStateReport,
}

/// `μ` at spacings `h` and `2h` with the Richardson bound-state verdict.
fn mu_run(
    wedge: &WedgeParams,
    radius: f64,
    spacing: f64,
    timings: &mut BTreeMap<String, f64>,
) -> stepgl::Result<MuRun> {
    let t = Instant::now();
    ensure_theta0()?;
    timings.insert("theta0".into(), seconds(t));
    // The requested spacing is the fine run; the companion at 2h only
    // supplies the error estimate.
    let t = Instant::now();
    let fine = compute_mu(wedge, radius, spacing)?;
    timings.insert("mu_h".into(), seconds(t));
    let t = Instant::now();
    let mesh = HalfDiskMesh::new(radius, 2.0 * spacing, wedge.alpha)?;
    let coarse = compute_mu_on_mesh(wedge, &mesh, DEFAULT_TOL)?;
    timings.insert("mu_2h".into(), seconds(t));
    let report = bound_state_from(wedge, coarse.eigenvalue, fine.eigenvalue)?;
    Ok(MuRun { fine, report })
}

fn put_mu(rec: &mut ResultRecord, run: &MuRun) {
    let r = &run.report;
    rec.put("mu", r.mu)
        .put("mu_2h", r.mu_coarse)
        .put("residual", run.fine.residual)
        .put("is_bound", r.is_bound)
        .put("status", r.status)
        .put("margin", r.margin)
        .put("error_estimate", r.error_estimate)
        .put("essential_floor", r.floor);
    if run.fine.near_essential_floor {
        rec.warnings
            .push("eigenvalue within tolerance of the essential floor; bound state uncertain".into());
    }
}

fn mu(ctx: &mut Ctx) -> Result<(), String> {
    let p = &ctx.cfg.params;
    let wedge = WedgeParams::new(p.alpha.expect("validated"), p.a.expect("validated")).map_err(|e| e.to_string())?;
    let radius = p.radius.unwrap_or(DEFAULT_RADIUS);
    let spacing = p.spacing.unwrap_or(DEFAULT_SPACING);
    let mut rec = ResultRecord::new(ctx.cfg, "mu");
    let t = Instant::now();
    match mu_run(&wedge, radius, spacing, &mut rec.timings) {
        Ok(run) => {
            put_mu(&mut rec, &run);
            if ctx.save_fields(false) {
                let mesh = HalfDiskMesh::new(radius, spacing, wedge.alpha).map_err(|e| e.to_string())?;
                let grid = halfdisk_grid(
                    &mesh,
                    &run.fine.eigenvector,
                    &[
                        ("a", format!("{:e}", wedge.a)),
                        ("eigenvalue", format!("{:e}", run.report.mu)),
                    ],
                );
                ctx.write_grid(&mut rec, "eigenvector", "eigenvector.grid", &grid)?;
            }
        }
        Err(e) => {
            rec.fail(e);
        }
    }
    rec.timings.insert("total".into(), seconds(t));
    ctx.emit(rec)
}

fn eff_energy(ctx: &mut Ctx) -> Result<(), String> {
    let p = &ctx.cfg.params;
    let wedge = WedgeParams::new(p.alpha.expect("validated"), p.a.expect("validated")).map_err(|e| e.to_string())?;
    let radius = p.radius.unwrap_or(CURVE_RADIUS);
    let spacing = p.spacing.unwrap_or(CURVE_SPACING);
    let mut rec = ResultRecord::new(ctx.cfg, "eff-energy");
    let t = Instant::now();
    let mesh = stepgl::halfplane::HalfDiskMesh::new(radius, spacing, wedge.alpha).map_err(|e| e.to_string())?;
    let outcome = ensure_theta0().and_then(|_| match &p.b_grid {
        Some(grid) => {
            let curve = energy_curve(wedge, grid, mesh.clone())?;
            rec.put("b_values", &curve.b_values)
                .put("e_values", &curve.e_values)
                .put("first_trivial_b", curve.first_trivial_b)
                .put("threshold_estimate", curve.threshold_estimate);
            rec.converged = curve.all_converged;
            Ok(Some(curve.to_csv()))
        }
        None => {
            let problem = EffectiveProblem::new(p.b.expect("validated"), wedge, mesh.clone())?;
            let r = minimize_j(&problem, &MinimizeOptions::for_mesh(&mesh))?;
            rec.put("energy", r.energy)
                .put("breakdown", r.breakdown)
                .put("iterations", r.iterations)
                .put("grad_norm", r.grad_norm)
                .put("sup_norm", r.sup_norm)
                .put("trivial", r.trivial);
            rec.converged = r.converged;
            if let Ok(fit) = decay_fit(&r, &mesh) {
                rec.put("delta", fit.delta).put("decay_quality", fit.quality);
            }
            Ok(None)
        }
    });
    match outcome {
        Ok(Some(csv)) => ctx.write_text(&mut rec, "curve", "curve.csv", &csv)?,
        Ok(None) => {}
        Err(e) => {
            rec.fail(e);
        }
    }
    if !rec.converged {
        rec.fail("minimization did not converge");
    }
    rec.timings.insert("total".into(), seconds(t));
    ctx.emit(rec)
}

fn geometry_of(cfg: &RunConfig) -> stepgl::Result<StepFieldGeometry> {
    let p = &cfg.params;
    build_geometry(
        p.rho.unwrap_or(1.0),
        p.chord_offset.unwrap_or(0.0),
        p.a.expect("validated"),
    )
}

fn solver_options(cfg: &RunConfig) -> GlOptions {
    let mut opts = GlOptions::default();
    if let Some(tol) = cfg.params.tol {
        opts.tol = tol;
    }
    opts
}

fn mesh_options(cfg: &RunConfig) -> GlMeshOptions {
    let mut opts = GlMeshOptions::default();
    if let Some(eta) = cfg.params.eta {
        opts.eta = eta;
    }
    opts
}

struct GlRun {
    problem: GlProblem,
    test: TestState,
    test_energy: f64,
    result: GlMinimizer,
}

/// Test state at the effective-model spacing `eta`, then full minimization.
fn gl_run(
    cfg: &RunConfig,
    geometry: StepFieldGeometry,
    kappa: f64,
    b: f64,
    timings: &mut BTreeMap<String, f64>,
) -> stepgl::Result<GlRun> {
    let mesh_opts = mesh_options(cfg);
    let t = Instant::now();
    let mesh = gl_mesh(&geometry, kappa, b, &mesh_opts)?;
    let problem = GlProblem::new(geometry, mesh, kappa, b)?;
    timings.insert("mesh".into(), seconds(t));
    let t = Instant::now();
    let test = effective_test_state(&problem, mesh_opts.eta)?;
    let test_energy = problem.evaluate(&test.psi, &problem.f.links)?.total();
    timings.insert("test_state".into(), seconds(t));
    let psi0 = if test.psi.iter().any(|v| v.norm() > 1e-8) {
        test.psi.clone()
    } else {
        seed_state(&problem, 0.5)
    };
    let t = Instant::now();
    let result = minimize_gl(&problem, psi0, &solver_options(cfg))?;
    timings.insert("minimize".into(), seconds(t));
    Ok(GlRun {
        problem,
        test,
        test_energy,
        result,
    })
}

fn put_gl(rec: &mut ResultRecord, run: &GlRun) -> stepgl::Result<()> {
    let state = &run.result.state;
    let apriori = apriori_check(state, &run.problem)?;
    rec.put("energy", state.energy)
        .put("breakdown", state.breakdown)
        .put("test_state_energy", run.test_energy)
        .put("residual", gl_residual(state, &run.problem)?)
        .put("apriori", apriori)
        .put("nodes", run.problem.mesh.len())
        .put("sweeps", run.result.sweeps)
        .put("psi_iterations", run.result.psi_iterations)
        .put("a_iterations", run.result.a_iterations)
        .put("joint_iterations", run.result.joint_iterations);
    rec.converged = run.result.converged;
    rec.warnings.extend(run.result.warning.clone());
    if !run.result.converged {
        rec.warnings
            .push("GL minimization stopped before reaching the residual targets".into());
    }
    Ok(())
}

fn gl_solve(ctx: &mut Ctx) -> Result<(), String> {
    let p = &ctx.cfg.params;
    let (kappa, b) = (p.kappa.expect("validated"), p.b.expect("validated"));
    let mut rec = ResultRecord::new(ctx.cfg, "gl-solve");
    let t = Instant::now();
    let _ = ensure_theta0();
    let outcome = geometry_of(ctx.cfg).and_then(|g| gl_run(ctx.cfg, g, kappa, b, &mut rec.timings));
    match outcome.and_then(|run| put_gl(&mut rec, &run).map(|_| run)) {
        Ok(run) => {
            if ctx.save_fields(true) {
                ctx.write_grid(
                    &mut rec,
                    "state",
                    "state.grid",
                    &gl_state_grid(&run.result.state, &run.problem),
                )?;
            }
        }
        Err(e) => {
            rec.fail(e);
        }
    }
    rec.timings.insert("total".into(), seconds(t));
    ctx.emit(rec)
}

/// Default curve grid: twelve points from `1.01/Θ₀` to `1.2/μ`.
pub fn default_b_grid(theta0: f64, mu: f64) -> Vec<f64> {
    let lo = 1.01 / theta0;
    let hi = 1.2 / mu;
    (0..12).map(|i| lo + (hi - lo) * i as f64 / 11.0).collect()
}

fn verify(ctx: &mut Ctx) -> Result<(), String> {
    let cfg = ctx.cfg;
    let p = &cfg.params;
    let kappa = p.kappa.expect("validated");
    let wedge = WedgeParams::new(p.alpha.unwrap_or(FRAC_PI_2), p.a.expect("validated")).map_err(|e| e.to_string())?;
    let mut checks: BTreeMap<String, bool> = BTreeMap::new();

    let mut rec = ResultRecord::new(cfg, "mu");
    let mu_run = match mu_run(
        &wedge,
        p.radius.unwrap_or(DEFAULT_RADIUS),
        p.spacing.unwrap_or(DEFAULT_SPACING),
        &mut rec.timings,
    ) {
        Ok(run) => run,
        Err(e) => {
            rec.fail(e);
            return ctx.emit(rec);
        }
    };
    put_mu(&mut rec, &mu_run);
    checks.insert("bound_state".into(), mu_run.report.is_bound);
    ctx.emit(rec)?;
    let mu = mu_run.report.mu;
    let theta0 = ensure_theta0().map_err(|e| e.to_string())?;

    let mut rec = ResultRecord::new(cfg, "energy-curve");
    let t = Instant::now();
    let grid = default_b_grid(theta0, mu);
    let mesh =
        stepgl::halfplane::HalfDiskMesh::new(CURVE_RADIUS, CURVE_SPACING, wedge.alpha).map_err(|e| e.to_string())?;
    let curve = energy_curve(wedge, &grid, mesh);
    rec.timings.insert("total".into(), seconds(t));
    match curve {
        Ok(curve) => {
            let threshold_ok = curve
                .threshold_estimate
                .map(|b| (b * mu - 1.0).abs() < 0.02)
                .unwrap_or(false);
            let monotone = curve.e_values.windows(2).all(|w| w[1] >= w[0] - 1e-9);
            checks.insert("threshold_matches_mu".into(), threshold_ok);
            checks.insert("curve_nondecreasing".into(), monotone);
            rec.put("b_values", &curve.b_values)
                .put("e_values", &curve.e_values)
                .put("threshold_estimate", curve.threshold_estimate)
                .put("inverse_mu", 1.0 / mu);
            rec.converged = curve.all_converged;
            ctx.write_text(&mut rec, "curve", "curve.csv", &curve.to_csv())?;
        }
        Err(e) => {
            rec.fail(e);
        }
    }
    ctx.emit(rec)?;

    let b = p.b.unwrap_or(0.5 * (1.0 / theta0 + 1.0 / mu));
    let mut rec = ResultRecord::new(cfg, "gl-solve");
    rec.put("b", b);
    let outcome = geometry_of(cfg).and_then(|g| gl_run(cfg, g, kappa, b, &mut rec.timings));
    let run = match outcome.and_then(|run| put_gl(&mut rec, &run).map(|_| run)) {
        Ok(run) => run,
        Err(e) => {
            rec.fail(e);
            ctx.emit(rec)?;
            return summary(ctx, checks, false);
        }
    };
    let apriori = apriori_check(&run.result.state, &run.problem).map_err(|e| e.to_string())?;
    checks.insert("sup_psi_bounded".into(), apriori.sup_ok);
    checks.insert(
        "below_test_state".into(),
        run.result.state.energy <= run.test_energy.min(0.0) + 1e-8 * run.test_energy.abs(),
    );
    let field_ok = run.result.state.breakdown.field < 0.01 * run.result.state.energy.abs();
    checks.insert("field_term_small".into(), field_ok);
    if ctx.save_fields(true) {
        ctx.write_grid(
            &mut rec,
            "state",
            "state.grid",
            &gl_state_grid(&run.result.state, &run.problem),
        )?;
    }
    let converged = run.result.converged;
    ctx.emit(rec)?;

    let mut rec = ResultRecord::new(cfg, "concentration");
    let ell = calibrated_ell(kappa, b, ELL_KAPPA_MIN, ELL_LENGTHS);
    let eff: Vec<f64> = run.test.models.iter().map(|m| m.result.energy).collect();
    match concentration_report(&run.result.state, &run.problem, ell, &eff) {
        Ok(report) => {
            checks.insert("l4_concentrated".into(), report.l4_fraction >= 0.9);
            checks.insert("symmetric_masses".into(), report.symmetry_defect() <= 0.05);
            rec.put("report", &report)
                .put("best_local_mismatch", report.best_local_mismatch())
                .put("best_global_mismatch", report.best_global_mismatch())
                .put("symmetry_defect", report.symmetry_defect());
        }
        Err(e) => {
            rec.fail(e);
        }
    }
    ctx.emit(rec)?;
    summary(ctx, checks, converged)
}

fn summary(ctx: &mut Ctx, checks: BTreeMap<String, bool>, converged: bool) -> Result<(), String> {
    let mut rec = ResultRecord::new(ctx.cfg, "summary");
    let passed = checks.values().all(|&c| c);
    rec.put("checks", &checks).put("passed", passed);
    rec.converged = converged;
    if !passed {
        let failed: Vec<&str> = checks.iter().filter(|(_, &v)| !v).map(|(k, _)| k.as_str()).collect();
        rec.fail(format!("failed checks: {}", failed.join(", ")));
    }
    ctx.emit(rec)
}

fn phase(ctx: &mut Ctx) -> Result<(), String> {
    let cfg = ctx.cfg;
    let p = &cfg.params;
    let geometry = geometry_of(cfg).map_err(|e| e.to_string())?;
    let kappas = p.kappa_grid.clone().expect("validated");
    let bs = p.b_grid.clone().expect("validated");
    let radius = p.radius.unwrap_or(DEFAULT_RADIUS);
    let spacing = p.spacing.unwrap_or(DEFAULT_SPACING);

    let mut rec = ResultRecord::new(cfg, "critical-fields");
    let t = Instant::now();
    let mut mu_values = Vec::new();
    for j in 0..geometry.endpoints.len() {
        let wedge = geometry.wedge(j).map_err(|e| e.to_string())?;
        let known = (0..j).find(|&k| geometry.wedge(k).ok() == Some(wedge));
        let value = match known {
            Some(k) => Ok(mu_values[k]),
            None => ensure_theta0()
                .and_then(|_| compute_mu(&wedge, radius, spacing))
                .map(|r| r.eigenvalue),
        };
        match value {
            Ok(v) => mu_values.push(v),
            Err(e) => {
                rec.fail(e);
                return ctx.emit(rec);
            }
        }
    }
    rec.timings.insert("mu".into(), seconds(t));
    let theta0 = ensure_theta0().map_err(|e| e.to_string())?;
    let kappa_ref = kappas[0];
    match critical_fields(&geometry, kappa_ref, theta0, &mu_values) {
        Ok(report) => {
            rec.put("report", &report)
                .put("ordering_holds", report.ordering_holds());
        }
        Err(e) => {
            rec.fail(e);
        }
    }
    ctx.emit(rec)?;

    let opts = PhaseOptions {
        mesh: mesh_options(cfg),
        solver: solver_options(cfg),
        ..PhaseOptions::default()
    };
    let cells: Vec<(f64, f64)> = kappas.iter().flat_map(|&k| bs.iter().map(move |&b| (k, b))).collect();
    let rows: Mutex<Vec<Option<(PhaseRow, f64)>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    let workers = p.jobs.unwrap_or(1).min(cells.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(kappa, b)) = cells.get(i) else {
                    break;
                };
                let t = Instant::now();
                let row = phase_diagram(&geometry, &[kappa], &[b], &mu_values, &opts).remove(0);
                rows.lock().expect("no worker panicked")[i] = Some((row, seconds(t)));
            });
        }
    });
    let rows: Vec<(PhaseRow, f64)> = rows
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .flatten()
        .collect();
    for (row, secs) in &rows {
        let mut rec = ResultRecord::new(cfg, "cell");
        rec.put("row", row);
        rec.converged = row.converged;
        rec.timings.insert("total".into(), *secs);
        if let Some(e) = &row.error {
            rec.fail(e);
        }
        ctx.emit(rec)?;
    }
    let table: Vec<PhaseRow> = rows.into_iter().map(|(r, _)| r).collect();
    let mut rec = ResultRecord::new(cfg, "table");
    rec.put("cells", table.len());
    ctx.write_text(&mut rec, "table", "phase.csv", &phase_table_csv(&table))?;
    ctx.emit(rec)
}
