//! Dual solver for the canonical QP.
//!
//! Because the Hessian is `rho * I` and `h` is separable, the primal
//! minimizer for fixed multipliers is closed form:
//! `u(mu) = prox_{h/rho}(w - (l + A^T mu) / rho)`. The dual
//! `q(mu) = min_u L(u, mu)` is concave and smooth on the capped simplex
//! `{mu >= 0, sum mu <= Gamma}`; accelerated projected gradient ascent
//! identifies the active pieces, and an active-set step then solves the
//! KKT equations of the identified piece exactly. When that refinement keeps
//! failing, the primal active-set method takes over from the dual iterate.

use alloc::vec;
use alloc::vec::Vec;

use super::primal::primal_active_set;
use super::{dense_oracle_qp, CanonicalQp, QpOptions, QpSolution, ORACLE_MAX_CONSTRAINTS, ORACLE_MAX_DIM};
use crate::linalg::{gram_spectral_norm, solve, Matrix};
use crate::math;
use crate::problem::Regularizer;
use crate::Result;

/// Dual sweeps after which a failed polish hands over to the primal
/// active-set method.
const ACTIVE_SET_AFTER: usize = 300;

/// Status of a primal coordinate on the current piece of `u(mu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    Free,
    /// Held at a box face or at zero under l1.
    Fixed(f64),
    /// Nonzero under l1, carrying the subgradient `+-weight`.
    Signed(f64),
}

struct DualMap<'a> {
    qp: &'a CanonicalQp,
    atmu: Vec<f64>,
}

impl<'a> DualMap<'a> {
    fn new(qp: &'a CanonicalQp) -> Self {
        DualMap { qp, atmu: vec![0.0; qp.dim()] }
    }

    #[inline]
    fn shifted(&self, j: usize) -> f64 {
        let qp = self.qp;
        qp.anchor[j] - (qp.linear[j] + self.atmu[j]) / qp.rho
    }

    fn primal(&mut self, mu: &[f64], u: &mut [f64]) {
        let qp = self.qp;
        qp.slopes.mul_t_vec(mu, &mut self.atmu);
        let step = 1.0 / qp.rho;
        for (j, uj) in u.iter_mut().enumerate() {
            *uj = qp.regularizer.prox_coord(j, self.shifted(j), step);
        }
    }

    /// Returns `q(mu)` and writes `u(mu)` and `grad q(mu) = b + A u(mu)`.
    fn value_and_grad(&mut self, mu: &[f64], u: &mut [f64], grad: &mut [f64]) -> f64 {
        self.primal(mu, u);
        let qp = self.qp;
        qp.slopes.mul_vec(u, grad);
        for (g, b) in grad.iter_mut().zip(&qp.offsets) {
            *g += b;
        }
        0.5 * qp.rho * math::dist_sq(u, &qp.anchor)
            + math::dot(&qp.linear, u)
            + qp.regularizer.value(u)
            + math::dot(mu, grad)
    }

    fn statuses(&mut self, mu: &[f64]) -> Vec<Coord> {
        let qp = self.qp;
        qp.slopes.mul_t_vec(mu, &mut self.atmu);
        (0..qp.dim())
            .map(|j| {
                let z = self.shifted(j);
                match &qp.regularizer {
                    Regularizer::Zero => Coord::Free,
                    Regularizer::Box { lower, upper } => {
                        if lower[j] == upper[j] || z <= lower[j] {
                            Coord::Fixed(lower[j])
                        } else if z >= upper[j] {
                            Coord::Fixed(upper[j])
                        } else {
                            Coord::Free
                        }
                    }
                    Regularizer::L1 { weight } => {
                        let t = weight / qp.rho;
                        if *weight == 0.0 {
                            Coord::Free
                        } else if z > t {
                            Coord::Signed(*weight)
                        } else if z < -t {
                            Coord::Signed(-*weight)
                        } else {
                            Coord::Fixed(0.0)
                        }
                    }
                }
            })
            .collect()
    }
}

/// Euclidean projection onto `{mu >= 0, sum mu <= cap}`.
fn project_capped_simplex(x: &mut [f64], cap: f64) {
    let clamped_sum: f64 = x.iter().map(|v| math::pos(*v)).sum();
    if clamped_sum <= cap {
        x.iter_mut().for_each(|v| *v = math::pos(*v));
        return;
    }
    // project onto {mu >= 0, sum mu = cap}
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        acc += s;
        let t = (acc - cap) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    x.iter_mut().for_each(|v| *v = math::pos(*v - theta));
}

struct Candidate {
    u: Vec<f64>,
    v: f64,
    duals: Vec<f64>,
    dual_v: f64,
}

/// Solves the KKT equations of one piece: hinges in `active` hold with
/// equality, `v` is free (and `sum mu = Gamma`) or pinned at zero, and each
/// coordinate follows its status.
fn solve_piece(qp: &CanonicalQp, active: &[usize], v_free: bool, coords: &[Coord]) -> Option<Candidate> {
    let d = qp.dim();
    let m = qp.constraint_count();
    let inv_rho = 1.0 / qp.rho;
    let mut base = vec![0.0; d];
    let mut free = vec![false; d];
    for j in 0..d {
        match coords[j] {
            Coord::Free => {
                base[j] = qp.anchor[j] - qp.linear[j] * inv_rho;
                free[j] = true;
            }
            Coord::Signed(c) => {
                base[j] = qp.anchor[j] - (qp.linear[j] + c) * inv_rho;
                free[j] = true;
            }
            Coord::Fixed(val) => base[j] = val,
        }
    }
    let h = active.len();
    if h == 0 {
        if v_free && qp.hinge_weight > 0.0 {
            return None;
        }
        return Some(Candidate { u: base, v: 0.0, duals: vec![0.0; m], dual_v: qp.hinge_weight });
    }
    let n = h + usize::from(v_free);
    let mut sys = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for (a, &ka) in active.iter().enumerate() {
        let row_a = qp.slopes.row(ka);
        for (b, &kb) in active.iter().enumerate().skip(a) {
            let row_b = qp.slopes.row(kb);
            let s: f64 = (0..d).filter(|&j| free[j]).map(|j| row_a[j] * row_b[j]).sum::<f64>() * inv_rho;
            sys[(a, b)] = s;
            sys[(b, a)] = s;
        }
        rhs[a] = qp.offsets[ka] + math::dot(row_a, &base);
        if v_free {
            sys[(a, h)] = 1.0;
            sys[(h, a)] = 1.0;
        }
    }
    if v_free {
        rhs[h] = qp.hinge_weight;
    }
    let sol = solve(sys.clone(), rhs.clone(), 1e-13).or_else(|| {
        let ridge = 1e-12 * (1.0 + (0..h).map(|a| sys[(a, a)]).sum::<f64>() / h as f64);
        for a in 0..h {
            sys[(a, a)] += ridge;
        }
        solve(sys, rhs, 1e-15)
    })?;
    let mut duals = vec![0.0; m];
    for (a, &k) in active.iter().enumerate() {
        duals[k] = sol[a];
    }
    let mut u = base;
    for (a, &k) in active.iter().enumerate() {
        let row = qp.slopes.row(k);
        for j in 0..d {
            if free[j] {
                u[j] -= row[j] * sol[a] * inv_rho;
            }
        }
    }
    qp.regularizer.project(&mut u);
    let (v, dual_v) = if v_free { (sol[h], 0.0) } else { (0.0, qp.hinge_weight - sol[..h].iter().sum::<f64>()) };
    Some(Candidate { u, v, duals, dual_v })
}

/// Primal-dual active-set refinement started from approximate multipliers.
/// When the guessed epigraph status fails, the opposite one is tried: an
/// infeasible linearization pushes the multipliers slowly toward the cap.
fn polish(qp: &CanonicalQp, map: &mut DualMap<'_>, mu_start: &[f64], tol: f64, best: &mut Option<QpSolution>) -> bool {
    let sum_mu: f64 = mu_start.iter().sum();
    let mut u = vec![0.0; qp.dim()];
    map.primal(mu_start, &mut u);
    let top = qp.affine_values(&u).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let guess = sum_mu >= qp.hinge_weight * (1.0 - 1e-7) && top > 0.0;
    polish_from(qp, map, mu_start, guess, tol, best) || (top > 0.0 && polish_from(qp, map, mu_start, !guess, tol, best))
}

fn polish_from(
    qp: &CanonicalQp,
    map: &mut DualMap<'_>,
    mu_start: &[f64],
    v_free_start: bool,
    tol: f64,
    best: &mut Option<QpSolution>,
) -> bool {
    let m = qp.constraint_count();
    let gamma = qp.hinge_weight;
    let scale = qp.scale().max(1.0);
    let mut mu = mu_start.to_vec();
    let mut u = vec![0.0; qp.dim()];
    map.primal(&mu, &mut u);
    let values = qp.affine_values(&u);
    let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let support_tol = 1e-10 * gamma.max(1.0);
    let near = 1e-9 * scale;
    let mut active: Vec<usize> =
        (0..m).filter(|&k| mu[k] > support_tol || (top > -near && values[k] >= top - near)).collect();
    let mut v_free = v_free_start;

    let mut history: Vec<(Vec<usize>, bool, Vec<Coord>)> = Vec::new();
    for _ in 0..12 {
        let coords = map.statuses(&mu);
        if history.iter().any(|(a, f, c)| *a == active && *f == v_free && *c == coords) {
            break;
        }
        history.push((active.clone(), v_free, coords.clone()));
        let Some(cand) = solve_piece(qp, &active, v_free, &coords) else {
            break;
        };
        let sol = QpSolution::assemble(qp, cand.u.clone(), cand.v, cand.duals.clone(), cand.dual_v, tol);
        let accepted = sol.kkt_residual <= tol;
        if best.as_ref().map_or(true, |b| sol.kkt_residual < b.kkt_residual) {
            *best = Some(sol);
        }
        if accepted {
            return true;
        }
        // update the guess
        let vals = qp.affine_values(&cand.u);
        let mut next: Vec<usize> = active.iter().copied().filter(|&k| cand.duals[k] > 0.0).collect();
        for k in 0..m {
            if !active.contains(&k) && vals[k] > cand.v + tol {
                next.push(k);
            }
        }
        next.sort_unstable();
        let total: f64 = cand.duals.iter().sum();
        if v_free && cand.v < 0.0 {
            v_free = false;
        } else if !v_free && total > gamma {
            v_free = true;
        }
        active = next;
        mu = cand.duals;
        project_capped_simplex(&mut mu, gamma);
    }
    false
}

/// Solves the canonical QP to KKT residual `opts.tol` (or the rounding floor
/// of the instance, if larger).
pub fn solve_canonical_qp(qp: &CanonicalQp, opts: &QpOptions) -> Result<QpSolution> {
    qp.validate()?;
    if !(opts.tol > 0.0) {
        return Err(crate::error::invalid("qp tolerance must be positive"));
    }
    let d = qp.dim();
    let m = qp.constraint_count();
    let gamma = qp.hinge_weight;
    let tol = opts.tol.max(qp.residual_floor());

    // m = 0 or Gamma = 0: the hinge is absent, u is a prox-gradient step.
    if m == 0 || gamma == 0.0 {
        let mut map = DualMap::new(qp);
        let mut u = vec![0.0; d];
        map.primal(&vec![0.0; m], &mut u);
        let v = if m == 0 { 0.0 } else { qp.hinge(&u) };
        return Ok(QpSolution::assemble(qp, u, v, vec![0.0; m], gamma, tol));
    }

    let mut map = DualMap::new(qp);
    let mut u = vec![0.0; d];
    let mut best: Option<QpSolution> = None;

    // slack hinge: the unconstrained prox point already satisfies all constraints
    map.primal(&vec![0.0; m], &mut u);
    if qp.affine_values(&u).iter().all(|a| *a <= 0.0) {
        return Ok(QpSolution::assemble(qp, u, 0.0, vec![0.0; m], gamma, tol));
    }

    let mut mu = match &opts.initial_duals {
        Some(init) if init.len() == m && math::all_finite(init) => init.clone(),
        _ => vec![0.0; m],
    };
    project_capped_simplex(&mut mu, gamma);
    if opts.initial_duals.is_some() && polish(qp, &mut map, &mu, tol, &mut best) {
        return Ok(finish(best, 0));
    }

    let mut lip = gram_spectral_norm(&qp.slopes, 50) / qp.rho * 1.05 + f64::MIN_POSITIVE;
    let mut grad = vec![0.0; m];
    let mut grad_c = vec![0.0; m];
    let mut cand = vec![0.0; m];
    let mut y = mu.clone();
    let mut q_mu = map.value_and_grad(&mu, &mut u, &mut grad);
    let mut t = 1.0;
    let mut next_polish = 5usize;
    let mut interval = 5.0f64;
    let mut sweeps = 0usize;
    let mut tried_active_set = false;
    while sweeps < opts.max_sweeps {
        let q_y = map.value_and_grad(&y, &mut u, &mut grad);
        // let the local curvature estimate shrink; backtracking restores it
        lip *= 0.8;
        let q_c = loop {
            for k in 0..m {
                cand[k] = y[k] + grad[k] / lip;
            }
            project_capped_simplex(&mut cand, gamma);
            let q_c = map.value_and_grad(&cand, &mut u, &mut grad_c);
            let mut lin = q_y;
            let mut step_sq = 0.0;
            for k in 0..m {
                let dk = cand[k] - y[k];
                lin += grad[k] * dk;
                step_sq += dk * dk;
            }
            let slack = 1e-13 * (1.0 + q_y.abs());
            if q_c >= lin - 0.5 * lip * step_sq - slack || lip > 1e300 {
                break q_c;
            }
            lip *= 2.0;
        };
        sweeps += 1;
        if q_c < q_mu {
            // non-monotone step: drop the momentum
            t = 1.0;
            y.copy_from_slice(&mu);
            continue;
        }
        let t_next = 0.5 * (1.0 + math::sqrt(1.0 + 4.0 * t * t));
        let beta = (t - 1.0) / t_next;
        for k in 0..m {
            y[k] = cand[k] + beta * (cand[k] - mu[k]);
        }
        mu.copy_from_slice(&cand);
        q_mu = q_c;
        t = t_next;
        if sweeps >= next_polish {
            if polish(qp, &mut map, &mu, tol, &mut best) {
                return Ok(finish(best, sweeps));
            }
            if sweeps >= ACTIVE_SET_AFTER && !tried_active_set {
                tried_active_set = true;
                if active_set_fallback(qp, &mut map, &mu, tol, &mut best) {
                    return Ok(finish(best, sweeps));
                }
            }
            interval *= 1.5;
            next_polish = sweeps + interval as usize;
        }
    }

    if polish(qp, &mut map, &mu, tol, &mut best) {
        return Ok(finish(best, sweeps));
    }
    if active_set_fallback(qp, &mut map, &mu, tol, &mut best) {
        return Ok(finish(best, sweeps));
    }
    if d <= ORACLE_MAX_DIM && m <= ORACLE_MAX_CONSTRAINTS {
        let mut sol = dense_oracle_qp(qp)?;
        sol.sweeps = sweeps;
        sol.converged = sol.kkt_residual <= tol;
        if sol.converged {
            return Ok(sol);
        }
        if best.as_ref().map_or(true, |b| sol.kkt_residual < b.kkt_residual) {
            best = Some(sol);
        }
    }
    // best effort: the dual iterate itself
    map.primal(&mu, &mut u);
    let v = qp.hinge(&u);
    let dual_v = math::pos(gamma - mu.iter().sum::<f64>());
    let fallback = QpSolution::assemble(qp, u, v, mu, dual_v, tol);
    let mut out = match best {
        Some(b) if b.kkt_residual <= fallback.kkt_residual => b,
        _ => fallback,
    };
    out.converged = out.kkt_residual <= tol;
    out.sweeps = sweeps;
    if !out.converged {
        log::warn!("qp: budget of {} sweeps exhausted, kkt residual {:e}", opts.max_sweeps, out.kkt_residual);
    }
    Ok(out)
}

/// Runs the primal active-set method from `u(mu)`.
fn active_set_fallback(
    qp: &CanonicalQp,
    map: &mut DualMap<'_>,
    mu: &[f64],
    tol: f64,
    best: &mut Option<QpSolution>,
) -> bool {
    let mut u = vec![0.0; qp.dim()];
    map.primal(mu, &mut u);
    let Some(sol) = primal_active_set(qp, &u, tol) else {
        return false;
    };
    let accepted = sol.kkt_residual <= tol;
    if best.as_ref().map_or(true, |b| sol.kkt_residual < b.kkt_residual) {
        *best = Some(sol);
    }
    accepted
}

fn finish(best: Option<QpSolution>, sweeps: usize) -> QpSolution {
    let mut sol = best.expect("accepted polish leaves a solution");
    sol.converged = true;
    sol.sweeps = sweeps;
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Regularizer;

    #[test]
    fn capped_simplex_projection() {
        let mut x = vec![0.5, -1.0, 0.2];
        project_capped_simplex(&mut x, 1.0);
        assert_eq!(x, vec![0.5, 0.0, 0.2]);
        let mut x = vec![2.0, 1.0, -3.0];
        project_capped_simplex(&mut x, 1.0);
        assert!((x[0] - 1.0).abs() < 1e-15 && x[1] == 0.0 && x[2] == 0.0);
        let mut x = vec![1.0, 1.0];
        project_capped_simplex(&mut x, 1.0);
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
    }

    fn one_dim(gamma: f64) -> CanonicalQp {
        CanonicalQp {
            rho: 1.0,
            anchor: vec![0.0],
            linear: vec![0.0],
            regularizer: Regularizer::Zero,
            hinge_weight: gamma,
            offsets: vec![1.0],
            slopes: Matrix::from_rows(1, 1, vec![-1.0]),
        }
    }

    #[test]
    fn prox_gradient_step_without_constraints() {
        let qp = CanonicalQp {
            rho: 2.0,
            anchor: vec![0.0],
            linear: vec![2.0],
            regularizer: Regularizer::Zero,
            hinge_weight: 1.0,
            offsets: vec![],
            slopes: Matrix::zeros(0, 1),
        };
        let sol = solve_canonical_qp(&qp, &QpOptions::default()).unwrap();
        assert_eq!(sol.u, vec![-1.0]);
        assert_eq!(sol.v, 0.0);
    }

    #[test]
    fn enforced_hinge() {
        let sol = solve_canonical_qp(&one_dim(10.0), &QpOptions::default()).unwrap();
        assert!((sol.u[0] - 1.0).abs() < 1e-12);
        assert!(sol.v.abs() < 1e-12);
        assert!(sol.duals[0] >= 1.0 - 1e-9 && sol.duals[0] <= 10.0);
        assert_eq!(sol.active_set, vec![0]);
        assert!(sol.converged && sol.kkt_residual <= 1e-9);
    }

    #[test]
    fn paid_hinge() {
        let sol = solve_canonical_qp(&one_dim(0.5), &QpOptions::default()).unwrap();
        assert!((sol.u[0] - 0.5).abs() < 1e-12);
        assert!((sol.v - 0.5).abs() < 1e-12);
        assert!((sol.duals[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn warm_start_solves_immediately() {
        let qp = one_dim(10.0);
        let first = solve_canonical_qp(&qp, &QpOptions::default()).unwrap();
        let opts = QpOptions { initial_duals: Some(first.duals.clone()), ..QpOptions::default() };
        let again = solve_canonical_qp(&qp, &opts).unwrap();
        assert_eq!(again.sweeps, 0);
        assert!((again.u[0] - 1.0).abs() < 1e-12);
    }
}
