//! High-accuracy reference solutions used as instrumentation.

use alloc::vec;
use alloc::vec::Vec;

use crate::algorithms::trace::Reference;
use crate::error::invalid;
use crate::linalg::{solve, Matrix};
use crate::math;
use crate::penalty::penalty_objective;
use crate::problem::{constraint_query, objective_and_gradient, ConstrainedProblem, Regularizer};
use crate::problems::quadratic::QuadraticProblem;
use crate::qp::{solve_canonical_qp, CanonicalQp, QpOptions};
use crate::{Error, Result};

/// Largest constraint count accepted by [`kkt_enumeration`].
pub const KKT_MAX_CONSTRAINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    /// Stop once the prox-gradient mapping norm falls below this.
    pub tol: f64,
    pub max_iterations: u64,
    /// Also stop when `F` moved less than `plateau_tol * max(1, |F|)` over
    /// the last `plateau_window` iterations.
    pub plateau_tol: f64,
    pub plateau_window: u64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions { tol: 1e-10, max_iterations: 1_000_000, plateau_tol: 1e-13, plateau_window: 1000 }
    }
}

/// Deterministic full-gradient prox-linear method on the exact penalty with
/// backtracking. Returns `x*` and `F* = F(x*)`.
pub fn brute_force_optimum(
    problem: &dyn ConstrainedProblem,
    gamma: f64,
    x0: &[f64],
    opts: &ReferenceOptions,
) -> Result<Reference> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma must be finite and nonnegative"));
    }
    if problem.component_count() == 0 {
        return Err(Error::StreamingUnsupported);
    }
    let reg = problem.regularizer();
    let c = problem.constants();
    let mut x = x0.to_vec();
    reg.project(&mut x);
    let penalty = |u: &[f64]| penalty_objective(problem, gamma, u, None).map(|p| p.value);
    let mut eta = 1.0 / (c.smoothness + gamma * c.constraint_smoothness).max(1e-12);
    let mut qp_opts = QpOptions { tol: 1e-12, ..QpOptions::default() };
    let mut history: Vec<f64> = Vec::new();
    for _ in 0..opts.max_iterations {
        let (f, grad) = objective_and_gradient(problem, &x)?;
        let cons = constraint_query(problem, &x)?;
        let offsets = cons.linearization_offsets(&x);
        let (next, f_next) = loop {
            let qp = CanonicalQp {
                rho: 1.0 / eta,
                anchor: x.clone(),
                linear: grad.clone(),
                regularizer: reg.clone(),
                hinge_weight: gamma,
                offsets: offsets.clone(),
                slopes: cons.jacobian.clone(),
            };
            let sol = solve_canonical_qp(&qp, &qp_opts)?;
            let step = math::sub(&sol.u, &x);
            let lin = math::max_hinge(&qp.affine_values(&sol.u));
            let model =
                f + math::dot(&grad, &step) + reg.value(&sol.u) + gamma * lin + 0.5 / eta * math::norm_sq(&step);
            let value = penalty(&sol.u)?;
            if value <= model + 1e-15 * model.abs().max(1.0) || eta < 1e-300 {
                qp_opts.initial_duals = Some(sol.duals);
                break (sol.u, value);
            }
            eta *= 0.5;
            qp_opts.initial_duals = None;
        };
        let mapping = math::norm(&math::sub(&next, &x)) / eta;
        x = next;
        let fx = f_next;
        if mapping <= opts.tol {
            return Ok(Reference { x_star: Some(x), f_star: Some(fx) });
        }
        history.push(fx);
        let w = opts.plateau_window as usize;
        if w > 0 && history.len() > w {
            let old = history[history.len() - 1 - w];
            if (old - fx).abs() <= opts.plateau_tol * fx.abs().max(1.0) {
                return Ok(Reference { x_star: Some(x), f_star: Some(fx) });
            }
        }
        if history.len() > 4 * w.max(1) {
            history.drain(..history.len() - w - 1);
        }
        eta *= 1.25;
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations })
}

/// Exact optimum of a strongly convex quadratic with affine constraints and
/// no regularizer, by enumerating active sets.
pub fn kkt_enumeration(problem: &QuadraticProblem) -> Result<Vec<f64>> {
    let d = problem.dim();
    let m = problem.constraint_count();
    if m > KKT_MAX_CONSTRAINTS {
        return Err(Error::SizeLimit { dim: d, constraints: m });
    }
    if !problem.constraints_affine() || *problem.regularizer() != Regularizer::Zero {
        return Err(invalid("enumeration needs affine constraints and no regularizer"));
    }
    let h = problem.mean_hessian();
    let c = problem.mean_linear();
    let cons = problem.constraints();
    let scale = 1.0 + h.max_abs() + c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let eps = 1e-9 * scale;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
        let size = d + active.len();
        let mut kkt = Matrix::zeros(size, size);
        let mut rhs = vec![0.0; size];
        for i in 0..d {
            for j in 0..d {
                kkt[(i, j)] = h[(i, j)];
            }
            rhs[i] = -c[i];
        }
        for (r, &k) in active.iter().enumerate() {
            for j in 0..d {
                kkt[(d + r, j)] = cons[k].linear[j];
                kkt[(j, d + r)] = cons[k].linear[j];
            }
            rhs[d + r] = -cons[k].constant;
        }
        let Some(sol) = solve(kkt, rhs, 1e-12) else { continue };
        let x = &sol[..d];
        if sol[d..].iter().any(|l| *l < -eps) {
            continue;
        }
        if cons.iter().any(|q| math::dot(&q.linear, x) + q.constant > eps) {
            continue;
        }
        let value = 0.5 * quad_form(&h, x) + math::dot(&c, x);
        if best.as_ref().map_or(true, |(b, _)| value < *b) {
            best = Some((value, x.to_vec()));
        }
    }
    best.map(|(_, x)| x).ok_or_else(|| invalid("no KKT point found (infeasible or singular)"))
}

fn quad_form(h: &Matrix, x: &[f64]) -> f64 {
    let mut hx = vec![0.0; x.len()];
    h.mul_vec(x, &mut hx);
    math::dot(&hx, x)
}

/// [`kkt_enumeration`] packaged as a reference, with `F*` evaluated at
/// `gamma`.
pub fn quadratic_reference(problem: &QuadraticProblem, gamma: f64) -> Result<Reference> {
    let x = kkt_enumeration(problem)?;
    let f = penalty_objective(problem, gamma, &x, None)?.value;
    Ok(Reference { x_star: Some(x), f_star: Some(f) })
}
