//! Exhaustive active-set enumeration for small canonical QPs.

use alloc::vec;
use alloc::vec::Vec;

use super::{CanonicalQp, QpSolution};
use crate::linalg::{solve, Matrix};
use crate::problem::Regularizer;
use crate::{Error, Result};

pub const ORACLE_MAX_DIM: usize = 8;
pub const ORACLE_MAX_CONSTRAINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Free,
    Lower(f64),
    Upper(f64),
    Zero,
    Plus(f64),
    Minus(f64),
}

fn choices(reg: &Regularizer, j: usize) -> Vec<Piece> {
    match reg {
        Regularizer::Zero => vec![Piece::Free],
        Regularizer::Box { lower, upper } => {
            if lower[j] == upper[j] {
                return vec![Piece::Lower(lower[j])];
            }
            let mut out = vec![Piece::Free];
            if lower[j].is_finite() {
                out.push(Piece::Lower(lower[j]));
            }
            if upper[j].is_finite() {
                out.push(Piece::Upper(upper[j]));
            }
            out
        }
        Regularizer::L1 { weight } if *weight > 0.0 => {
            vec![Piece::Plus(*weight), Piece::Minus(*weight), Piece::Zero]
        }
        Regularizer::L1 { .. } => vec![Piece::Free],
    }
}

/// Solves the canonical QP by enumerating every combination of active
/// hinges, epigraph status and per-coordinate regularizer pieces, solving
/// the full KKT equality system of each and keeping the feasible,
/// sign-consistent candidate of least objective.
pub fn dense_oracle_qp(qp: &CanonicalQp) -> Result<QpSolution> {
    qp.validate()?;
    let d = qp.dim();
    let m = qp.constraint_count();
    if d > ORACLE_MAX_DIM || m > ORACLE_MAX_CONSTRAINTS {
        return Err(Error::SizeLimit { dim: d, constraints: m });
    }
    let eps = 1e-9 * qp.scale().max(1.0);
    let per_coord: Vec<Vec<Piece>> = (0..d).map(|j| choices(&qp.regularizer, j)).collect();
    let mut best: Option<(f64, QpSolution)> = None;
    let mut pieces = vec![Piece::Free; d];
    let mut odometer = vec![0usize; d];
    loop {
        for j in 0..d {
            pieces[j] = per_coord[j][odometer[j]];
        }
        for mask in 0u32..(1u32 << m) {
            let active: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
            for v_free in [false, true] {
                if v_free && (active.is_empty() || qp.hinge_weight == 0.0) {
                    continue;
                }
                if let Some(sol) = candidate(qp, &pieces, &active, v_free, eps) {
                    let obj = qp.objective(&sol.u);
                    if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                        best = Some((obj, sol));
                    }
                }
            }
        }
        // advance the odometer over coordinate pieces
        let mut j = 0;
        while j < d {
            odometer[j] += 1;
            if odometer[j] < per_coord[j].len() {
                break;
            }
            odometer[j] = 0;
            j += 1;
        }
        if j == d {
            break;
        }
    }
    best.map(|(_, s)| s).ok_or(Error::DegenerateQp("no KKT point found by enumeration"))
}

fn candidate(qp: &CanonicalQp, pieces: &[Piece], active: &[usize], v_free: bool, eps: f64) -> Option<QpSolution> {
    let d = qp.dim();
    let m = qp.constraint_count();
    let h = active.len();
    // unknowns: u (d), v, mu_H (h)
    let n = d + 1 + h;
    let mut sys = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for j in 0..d {
        match pieces[j] {
            Piece::Lower(val) | Piece::Upper(val) => {
                sys[(j, j)] = 1.0;
                rhs[j] = val;
            }
            Piece::Zero => {
                sys[(j, j)] = 1.0;
            }
            Piece::Free | Piece::Plus(_) | Piece::Minus(_) => {
                let c = match pieces[j] {
                    Piece::Plus(w) => w,
                    Piece::Minus(w) => -w,
                    _ => 0.0,
                };
                sys[(j, j)] = qp.rho;
                for (a, &k) in active.iter().enumerate() {
                    sys[(j, d + 1 + a)] = qp.slopes[(k, j)];
                }
                rhs[j] = qp.rho * qp.anchor[j] - qp.linear[j] - c;
            }
        }
    }
    if v_free {
        for a in 0..h {
            sys[(d, d + 1 + a)] = 1.0;
        }
        rhs[d] = qp.hinge_weight;
    } else {
        sys[(d, d)] = 1.0;
    }
    for (a, &k) in active.iter().enumerate() {
        let r = d + 1 + a;
        for j in 0..d {
            sys[(r, j)] = qp.slopes[(k, j)];
        }
        sys[(r, d)] = -1.0;
        rhs[r] = -qp.offsets[k];
    }
    let z = solve(sys, rhs, 1e-12)?;
    let mut u = z[..d].to_vec();
    for j in 0..d {
        match pieces[j] {
            Piece::Lower(val) | Piece::Upper(val) => u[j] = val,
            Piece::Zero => u[j] = 0.0,
            _ => {}
        }
    }
    let v = z[d];
    let mut duals = vec![0.0; m];
    for (a, &k) in active.iter().enumerate() {
        duals[k] = z[d + 1 + a];
    }

    // primal and dual feasibility
    if v < -eps || duals.iter().any(|mu| *mu < -eps) {
        return None;
    }
    let sum_mu: f64 = duals.iter().sum();
    if !v_free && sum_mu > qp.hinge_weight + eps {
        return None;
    }
    let values = qp.affine_values(&u);
    if values.iter().any(|a| *a > v + eps) {
        return None;
    }
    // sign consistency of each coordinate piece
    let mut grad = vec![0.0; d];
    qp.slopes.mul_t_vec(&duals, &mut grad);
    for j in 0..d {
        let g = grad[j] + qp.rho * (u[j] - qp.anchor[j]) + qp.linear[j];
        let ok = match (pieces[j], &qp.regularizer) {
            (Piece::Free, Regularizer::Box { lower, upper }) => u[j] >= lower[j] - eps && u[j] <= upper[j] + eps,
            (Piece::Free, _) => true,
            (Piece::Lower(_), Regularizer::Box { lower, upper }) if lower[j] == upper[j] => true,
            (Piece::Lower(_), _) => g >= -eps,
            (Piece::Upper(_), _) => g <= eps,
            (Piece::Plus(_), _) => u[j] >= -eps,
            (Piece::Minus(_), _) => u[j] <= eps,
            (Piece::Zero, Regularizer::L1 { weight }) => g.abs() <= weight + eps,
            (Piece::Zero, _) => false,
        };
        if !ok {
            return None;
        }
    }
    let dual_v = if v_free { 0.0 } else { qp.hinge_weight - sum_mu };
    qp.regularizer.project(&mut u);
    Some(QpSolution::assemble(qp, u, v, duals, dual_v, eps))
}
