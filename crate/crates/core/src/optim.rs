//! Preconditioned Barzilai–Borwein descent with Armijo backtracking for real
//! functionals of complex fields.
//!
//! Gradients use the real-and-imaginary-parts representation: for a field
//! `u` the gradient `g` satisfies `dE(u; v) = Re Σ conj(g_i) v_i`.

use num_complex::Complex64;
use serde::Serialize;

pub trait Objective {
    /// Energy and gradient at `u`.
    fn eval(&mut self, u: &[Complex64]) -> (f64, Vec<Complex64>);

    /// Applies an approximate inverse Hessian to a gradient.
    fn precondition(&mut self, g: &[Complex64]) -> Vec<Complex64> {
        g.to_vec()
    }

    /// Called at every accepted iterate before the preconditioner is applied
    /// there; state-dependent preconditioners are frozen at this point.
    fn anchor(&mut self, _u: &[Complex64]) {}

    /// Norm used by the stopping test.
    fn grad_norm(&self, g: &[Complex64]) -> f64 {
        g.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DescentOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Stop when the energy changes by less than this relative amount over
    /// `stall_window` accepted steps.
    pub rel_energy_tol: f64,
    pub stall_window: usize,
    pub armijo: f64,
    pub initial_step: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            grad_tol: 1e-8,
            rel_energy_tol: 1e-12,
            stall_window: 50,
            armijo: 1e-4,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    GradientTolerance,
    EnergyStalled,
    /// Backtracking could not find a decrease; the iterate is stationary to
    /// working precision.
    LineSearchExhausted,
    MaxIterations,
}

#[derive(Debug, Clone, Serialize)]
pub struct DescentReport {
    pub iterations: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub reason: StopReason,
    /// Energy after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

fn re_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Minimizes `obj` starting from `u`, which holds the final iterate on return.
pub fn minimize<O: Objective>(obj: &mut O, u: &mut Vec<Complex64>, opts: &DescentOptions) -> DescentReport {
    let (mut energy, mut grad) = obj.eval(u);
    obj.anchor(u);
    let mut z = obj.precondition(&grad);
    let mut trace = vec![energy];
    let mut step = opts.initial_step;
    let mut gnorm = obj.grad_norm(&grad);
    let finish = |iterations, energy, gnorm, reason, trace| DescentReport {
        iterations,
        energy,
        grad_norm: gnorm,
        converged: matches!(reason, StopReason::GradientTolerance | StopReason::EnergyStalled),
        reason,
        trace,
    };
    for iter in 0..opts.max_iter {
        if gnorm <= opts.grad_tol {
            return finish(iter, energy, gnorm, StopReason::GradientTolerance, trace);
        }
        if trace.len() > opts.stall_window {
            let old = trace[trace.len() - 1 - opts.stall_window];
            if (old - energy).abs() <= opts.rel_energy_tol * energy.abs().max(1e-300) {
                return finish(iter, energy, gnorm, StopReason::EnergyStalled, trace);
            }
        }
        let slope = -re_dot(&grad, &z);
        if slope >= 0.0 {
            return finish(iter, energy, gnorm, StopReason::LineSearchExhausted, trace);
        }
        let mut trial = u.clone();
        let mut accepted = None;
        for _ in 0..60 {
            for ((t, x), d) in trial.iter_mut().zip(u.iter()).zip(&z) {
                *t = x - d * step;
            }
            let (e, g) = obj.eval(&trial);
            if e.is_finite() && e <= energy + opts.armijo * step * slope {
                accepted = Some((e, g));
                break;
            }
            step *= 0.5;
        }
        let Some((e_new, g_new)) = accepted else {
            return finish(iter, energy, gnorm, StopReason::LineSearchExhausted, trace);
        };
        obj.anchor(&trial);
        let z_new = obj.precondition(&g_new);
        // BB2 step in the preconditioned metric: ⟨s, y⟩ / ⟨y, P y⟩.
        let s: Vec<Complex64> = trial.iter().zip(u.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<Complex64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let py: Vec<Complex64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
        let sy = re_dot(&s, &y);
        let ypy = re_dot(&y, &py);
        step = if sy > 0.0 && ypy > 0.0 {
            (sy / ypy).clamp(1e-12, 1e12)
        } else {
            (step * 2.0).min(1e12)
        };
        *u = trial;
        energy = e_new;
        grad = g_new;
        z = z_new;
        gnorm = obj.grad_norm(&grad);
        trace.push(energy);
    }
    let reason = if gnorm <= opts.grad_tol {
        StopReason::GradientTolerance
    } else {
        StopReason::MaxIterations
    };
    finish(opts.max_iter, energy, gnorm, reason, trace)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NewtonOptions {
    pub max_newton: usize,
    pub max_cg: usize,
    pub grad_tol: f64,
    /// Stop after a step that changes the energy by less than this relative
    /// amount.
    pub rel_energy_tol: f64,
    pub armijo: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_newton: 50,
            max_cg: 200,
            grad_tol: 1e-8,
            rel_energy_tol: 1e-15,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub cg_iterations: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub converged: bool,
    /// Energy after every accepted Newton step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Forward difference of the gradient along `v`; `g` is the gradient at `u`.
fn hessian_apply<O: Objective>(obj: &mut O, u: &[Complex64], g: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
    let un = re_dot(u, u).sqrt();
    let vn = re_dot(v, v).sqrt();
    let eps = 1e-7 * (1.0 + un) / vn.max(1e-300);
    let shifted: Vec<Complex64> = u.iter().zip(v).map(|(a, b)| a + b * eps).collect();
    let (_, gp) = obj.eval(&shifted);
    gp.iter().zip(g).map(|(a, b)| (a - b) / eps).collect()
}

/// Truncated Newton: preconditioned CG on the Hessian, stopped at the forcing
/// tolerance or at the first direction of non-positive curvature, followed by
/// Armijo backtracking from the full step.
pub fn newton_refine<O: Objective>(obj: &mut O, u: &mut Vec<Complex64>, opts: &NewtonOptions) -> NewtonReport {
    let (mut energy, mut grad) = obj.eval(u);
    let mut trace = vec![energy];
    let mut cg_total = 0;
    let mut gnorm = obj.grad_norm(&grad);
    for it in 0..opts.max_newton {
        if gnorm <= opts.grad_tol {
            return NewtonReport {
                iterations: it,
                cg_iterations: cg_total,
                energy,
                grad_norm: gnorm,
                converged: true,
                trace,
            };
        }
        obj.anchor(u);
        let n = u.len();
        let mut d = vec![Complex64::new(0.0, 0.0); n];
        let mut r: Vec<Complex64> = grad.iter().map(|g| -g).collect();
        let mut z = obj.precondition(&r);
        let mut p = z.clone();
        let mut rz = re_dot(&r, &z);
        let rz0 = rz;
        let forcing = (rz0.sqrt()).min(0.1).powi(2);
        for _ in 0..opts.max_cg {
            cg_total += 1;
            let hp = hessian_apply(obj, u, &grad, &p);
            let php = re_dot(&p, &hp);
            if php <= 0.0 {
                if d.iter().all(|v| v.norm_sqr() == 0.0) {
                    d = p.clone();
                }
                break;
            }
            let alpha = rz / php;
            for i in 0..n {
                d[i] += p[i] * alpha;
                r[i] -= hp[i] * alpha;
            }
            z = obj.precondition(&r);
            let rz_new = re_dot(&r, &z);
            if rz_new <= forcing * rz0 {
                break;
            }
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + p[i] * beta;
            }
        }
        let slope = re_dot(&grad, &d);
        if slope >= 0.0 {
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<Complex64> = u.iter().zip(&d).map(|(a, b)| a + b * step).collect();
            let (e, g) = obj.eval(&trial);
            if e.is_finite() && e <= energy + opts.armijo * step * slope {
                accepted = Some((trial, e, g));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, e, g)) = accepted else {
            break;
        };
        let stalled = (energy - e).abs() <= opts.rel_energy_tol * e.abs().max(1e-300);
        *u = trial;
        energy = e;
        grad = g;
        gnorm = obj.grad_norm(&grad);
        trace.push(energy);
        if stalled {
            break;
        }
    }
    NewtonReport {
        iterations: trace.len() - 1,
        cg_iterations: cg_total,
        energy,
        grad_norm: gnorm,
        converged: gnorm <= opts.grad_tol,
        trace,
    }
}
