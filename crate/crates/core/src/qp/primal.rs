//! Primal active-set method for the epigraph QP under the zero or box
//! regularizer.
//!
//! Used when the dual iteration cannot identify the active pieces, which
//! happens when many hinges bind at once together with box faces. Starting
//! from any feasible `(u, v)`, each step solves the equality-constrained QP
//! of the working set and either moves to the first blocking constraint or
//! drops the constraint with the most negative multiplier. The number of
//! steps is finite barring cycling, which the iteration cap guards against.

use alloc::vec;
use alloc::vec::Vec;

use super::{CanonicalQp, QpSolution};
use crate::linalg::{solve, Matrix};
use crate::math;
use crate::problem::Regularizer;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bound {
    Free,
    Lower,
    Upper,
    /// `lower == upper`; never released.
    Pinned,
}

/// Runs the active-set method from `u` (which must lie in the box). Returns
/// `None` for the l1 regularizer or when the working-set system breaks down.
pub(super) fn primal_active_set(qp: &CanonicalQp, u_start: &[f64], tol: f64) -> Option<QpSolution> {
    let (lower, upper) = match &qp.regularizer {
        Regularizer::Zero => (None, None),
        Regularizer::Box { lower, upper } => (Some(lower.as_slice()), Some(upper.as_slice())),
        Regularizer::L1 { weight } if *weight == 0.0 => (None, None),
        Regularizer::L1 { .. } => return None,
    };
    let d = qp.dim();
    let m = qp.constraint_count();
    let gamma = qp.hinge_weight;
    let mut u = u_start.to_vec();
    qp.regularizer.project(&mut u);
    let mut aff = qp.affine_values(&u);
    let mut v = math::max_hinge(&aff);

    let mut bounds: Vec<Bound> = (0..d)
        .map(|j| match (lower, upper) {
            (Some(lo), Some(hi)) if lo[j] == hi[j] => Bound::Pinned,
            (Some(lo), _) if u[j] <= lo[j] => Bound::Lower,
            (_, Some(hi)) if u[j] >= hi[j] => Bound::Upper,
            _ => Bound::Free,
        })
        .collect();
    let mut hinges: Vec<usize> = Vec::new();
    let mut v_bound = v == 0.0;
    if !v_bound {
        let top = (0..m).fold(0, |b, k| if aff[k] > aff[b] { k } else { b });
        hinges.push(top);
    }

    let scale = qp.scale().max(1.0);
    let max_steps = 20 * (d + m + 1);
    for _ in 0..max_steps {
        let free: Vec<usize> = (0..d).filter(|&j| bounds[j] == Bound::Free).collect();
        let grad_u: Vec<f64> = (0..d).map(|j| qp.rho * (u[j] - qp.anchor[j]) + qp.linear[j]).collect();

        // v with no pinning constraint: slide it down to the first blocker
        if hinges.is_empty() && !v_bound {
            let (mut step, mut block) = (v, None);
            for k in 0..m {
                if v - aff[k] < step {
                    step = v - aff[k];
                    block = Some(k);
                }
            }
            v -= math::pos(step);
            match block {
                Some(k) => hinges.push(k),
                None => v_bound = true,
            }
            continue;
        }

        // equality-constrained step: rows are free coordinates, v, then the
        // working constraints
        let nf = free.len();
        let nc = hinges.len() + usize::from(v_bound);
        let n = nf + 1 + nc;
        let mut sys = Matrix::zeros(n, n);
        let mut rhs = vec![0.0; n];
        for (a, &j) in free.iter().enumerate() {
            sys[(a, a)] = qp.rho;
            rhs[a] = -grad_u[j];
        }
        rhs[nf] = -gamma;
        for (c, &k) in hinges.iter().enumerate() {
            let row = qp.slopes.row(k);
            let r = nf + 1 + c;
            for (a, &j) in free.iter().enumerate() {
                sys[(a, r)] = row[j];
                sys[(r, a)] = row[j];
            }
            sys[(nf, r)] = -1.0;
            sys[(r, nf)] = -1.0;
        }
        if v_bound {
            sys[(nf, n - 1)] = -1.0;
            sys[(n - 1, nf)] = -1.0;
        }
        let z = solve(sys, rhs, 1e-14)?;
        let mut p_u = vec![0.0; d];
        for (a, &j) in free.iter().enumerate() {
            p_u[j] = z[a];
        }
        let p_v = z[nf];
        let step_norm = math::norm_inf(&p_u).max(p_v.abs());

        if step_norm <= 1e-14 * (1.0 + math::norm_inf(&u).max(v.abs())) {
            // stationary on the working set: check multiplier signs
            let mut mu = vec![0.0; m];
            for (c, &k) in hinges.iter().enumerate() {
                mu[k] = z[nf + 1 + c];
            }
            let nu = if v_bound { z[n - 1] } else { 0.0 };
            let mut atmu = vec![0.0; d];
            qp.slopes.mul_t_vec(&mu, &mut atmu);
            let floor = -1e-12 * scale;
            let mut worst: Option<(f64, Drop)> = None;
            let mut consider = |val: f64, what: Drop| {
                if val < floor && worst.map_or(true, |(w, _)| val < w) {
                    worst = Some((val, what));
                }
            };
            for (c, &k) in hinges.iter().enumerate() {
                consider(mu[k], Drop::Hinge(c));
            }
            if v_bound {
                consider(nu, Drop::VBound);
            }
            for j in 0..d {
                let s = grad_u[j] + atmu[j];
                match bounds[j] {
                    Bound::Lower => consider(s, Drop::Coord(j)),
                    Bound::Upper => consider(-s, Drop::Coord(j)),
                    _ => {}
                }
            }
            match worst {
                None => {
                    let mu = mu.iter().map(|x| math::pos(*x)).collect();
                    return Some(QpSolution::assemble(qp, u, v, mu, math::pos(nu), tol));
                }
                Some((_, Drop::Hinge(c))) => {
                    hinges.remove(c);
                }
                Some((_, Drop::VBound)) => v_bound = false,
                Some((_, Drop::Coord(j))) => bounds[j] = Bound::Free,
            }
            continue;
        }

        // ratio test
        let mut alpha = 1.0;
        let mut block = Block::None;
        let mut rate = vec![0.0; m];
        qp.slopes.mul_vec(&p_u, &mut rate);
        for k in 0..m {
            if hinges.contains(&k) {
                continue;
            }
            let r = rate[k] - p_v;
            if r > 0.0 {
                let a = math::pos(v - aff[k]) / r;
                if a < alpha {
                    alpha = a;
                    block = Block::Hinge(k);
                }
            }
        }
        if !v_bound && p_v < 0.0 {
            let a = v / -p_v;
            if a < alpha {
                alpha = a;
                block = Block::VBound;
            }
        }
        if let (Some(lo), Some(hi)) = (lower, upper) {
            for &j in &free {
                let a = if p_u[j] < 0.0 {
                    (u[j] - lo[j]) / -p_u[j]
                } else if p_u[j] > 0.0 {
                    (hi[j] - u[j]) / p_u[j]
                } else {
                    continue;
                };
                if a < alpha {
                    alpha = a;
                    block = if p_u[j] < 0.0 { Block::Lower(j) } else { Block::Upper(j) };
                }
            }
        }
        let alpha = math::pos(alpha);
        for j in 0..d {
            u[j] += alpha * p_u[j];
        }
        v = math::pos(v + alpha * p_v);
        match block {
            Block::None => {}
            Block::Hinge(k) => hinges.push(k),
            Block::VBound => {
                v = 0.0;
                v_bound = true;
            }
            Block::Lower(j) => {
                u[j] = lower.unwrap()[j];
                bounds[j] = Bound::Lower;
            }
            Block::Upper(j) => {
                u[j] = upper.unwrap()[j];
                bounds[j] = Bound::Upper;
            }
        }
        aff = qp.affine_values(&u);
    }
    None
}

#[derive(Debug, Clone, Copy)]
enum Drop {
    Hinge(usize),
    VBound,
    Coord(usize),
}

#[derive(Debug, Clone, Copy)]
enum Block {
    None,
    Hinge(usize),
    VBound,
    Lower(usize),
    Upper(usize),
}
