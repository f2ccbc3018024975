//! The quadratic minimization oracle (QMO).
//!
//! Every algorithm in the crate reduces its per-step subproblem to
//!
//! ```text
//!     minimize_u  (rho/2) ||u - w||^2 + <l, u> + h(u) + Gamma * max{0, max_k (b_k + <A_k, u>)}
//! ```
//!
//! or, with an epigraph variable `v`,
//!
//! ```text
//!     minimize_{u, v}  (rho/2) ||u - w||^2 + <l, u> + h(u) + Gamma * v
//!     subject to       b_k + <A_k, u> <= v   (dual mu_k),   v >= 0   (dual nu)
//! ```
//!
//! [`solve_canonical_qp`] works on the duals; [`dense_oracle_qp`] enumerates
//! active sets and is kept as an independent reference for small instances.

mod dual;
mod oracle;
mod primal;

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::math;
use crate::problem::Regularizer;
use crate::{error::invalid, Error, Result};

pub use dual::solve_canonical_qp;
pub use oracle::{dense_oracle_qp, ORACLE_MAX_CONSTRAINTS, ORACLE_MAX_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalQp {
    /// Quadratic coefficient `rho > 0`.
    pub rho: f64,
    /// Proximal anchor `w`.
    pub anchor: Vec<f64>,
    /// Linear term `l`.
    pub linear: Vec<f64>,
    pub regularizer: Regularizer,
    /// Hinge weight `Gamma >= 0`.
    pub hinge_weight: f64,
    /// Offsets `b_k`.
    pub offsets: Vec<f64>,
    /// Slopes `A` (`m x d`, row `k` is `A_k`).
    pub slopes: Matrix,
}

impl CanonicalQp {
    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::DegenerateQp("rho must be positive and finite"));
        }
        if !(self.hinge_weight >= 0.0) || !self.hinge_weight.is_finite() {
            return Err(Error::DegenerateQp("hinge weight must be nonnegative and finite"));
        }
        if self.linear.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.linear.len() });
        }
        if self.slopes.rows() != self.offsets.len() || (self.slopes.rows() > 0 && self.slopes.cols() != d) {
            return Err(invalid("slope matrix must be m x d"));
        }
        if !math::all_finite(&self.anchor)
            || !math::all_finite(&self.linear)
            || !math::all_finite(&self.offsets)
            || !self.slopes.is_finite()
        {
            return Err(Error::NonFinite { what: "qp data" });
        }
        self.regularizer.validate(d)
    }

    /// `b_k + <A_k, u>` for every `k`.
    pub fn affine_values(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.constraint_count()];
        self.slopes.mul_vec(u, &mut out);
        for (o, b) in out.iter_mut().zip(&self.offsets) {
            *o += b;
        }
        out
    }

    /// `max{0, max_k (b_k + <A_k, u>)}`
    pub fn hinge(&self, u: &[f64]) -> f64 {
        math::max_hinge(&self.affine_values(u))
    }

    /// Objective value at `u` (`+inf` outside the domain of `h`).
    pub fn objective(&self, u: &[f64]) -> f64 {
        let h = self.regularizer.value(u);
        if h == f64::INFINITY {
            return h;
        }
        0.5 * self.rho * math::dist_sq(u, &self.anchor)
            + math::dot(&self.linear, u)
            + h
            + self.hinge_weight * self.hinge(u)
    }

    /// Magnitude of the data, used to set a floating-point floor on the
    /// achievable KKT residual.
    pub fn scale(&self) -> f64 {
        let s = (self.rho * math::norm_inf(&self.anchor))
            .max(math::norm_inf(&self.linear))
            .max(self.hinge_weight * self.slopes.max_abs())
            .max(math::norm_inf(&self.offsets))
            .max(self.rho);
        match &self.regularizer {
            Regularizer::L1 { weight } => s.max(*weight),
            _ => s,
        }
    }

    /// Residual floor implied by rounding at this scale.
    pub fn residual_floor(&self) -> f64 {
        let size = (self.dim() + self.constraint_count()) as f64;
        1e3 * f64::EPSILON * self.scale().max(1.0) * math::sqrt(size.max(1.0))
    }
}

/// Solution of the epigraph QP with its multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: Vec<f64>,
    pub v: f64,
    /// Multipliers of `b_k + <A_k, u> <= v`.
    pub duals: Vec<f64>,
    /// Multiplier of `v >= 0`.
    pub dual_v: f64,
    pub kkt_residual: f64,
    /// Hinges within tolerance of the epigraph value.
    pub active_set: Vec<usize>,
    /// False when the iteration budget ran out before the tolerance was met.
    pub converged: bool,
    /// Dual sweeps spent.
    pub sweeps: usize,
}

impl QpSolution {
    pub(crate) fn assemble(qp: &CanonicalQp, u: Vec<f64>, v: f64, duals: Vec<f64>, dual_v: f64, tol: f64) -> Self {
        let mut sol =
            QpSolution { u, v, duals, dual_v, kkt_residual: 0.0, active_set: Vec::new(), converged: true, sweeps: 0 };
        sol.kkt_residual = kkt_residual(qp, &sol);
        let values = qp.affine_values(&sol.u);
        sol.active_set = (0..values.len()).filter(|&k| values[k] >= sol.v - tol.max(1e-12)).collect();
        sol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpOptions {
    /// KKT residual target.
    pub tol: f64,
    /// Dual iteration cap.
    pub max_sweeps: usize,
    /// Warm-start multipliers from a previous solve of the same shape.
    pub initial_duals: Option<Vec<f64>>,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { tol: 1e-9, max_sweeps: 10_000, initial_duals: None }
    }
}

/// Certifies a candidate solution. The residual is the largest of
///
/// - the norm of the stationarity residual in `u` under the best subgradient
///   selection of `h`,
/// - the stationarity residual in `v`, `|Gamma - sum_k mu_k - nu|`,
/// - primal infeasibility (hinges above `v`, negative `v`, box violations),
/// - dual infeasibility (negative multipliers),
/// - complementarity `|mu_k (b_k + <A_k, u> - v)|` and `|nu v|`.
pub fn kkt_residual(qp: &CanonicalQp, sol: &QpSolution) -> f64 {
    let d = qp.dim();
    let m = qp.constraint_count();
    let mut grad = vec![0.0; d];
    if m > 0 {
        qp.slopes.mul_t_vec(&sol.duals, &mut grad);
    }
    for j in 0..d {
        grad[j] += qp.rho * (sol.u[j] - qp.anchor[j]) + qp.linear[j];
    }
    let mut stat_sq = 0.0;
    let mut primal: f64 = 0.0;
    for (j, gj) in grad.iter().enumerate() {
        let uj = sol.u[j];
        let r = match &qp.regularizer {
            Regularizer::Zero => *gj,
            Regularizer::Box { lower, upper } => {
                let (lo, hi) = (lower[j], upper[j]);
                primal = primal.max(math::pos(lo - uj)).max(math::pos(uj - hi));
                if lo == hi {
                    0.0
                } else if uj <= lo {
                    math::pos(-gj)
                } else if uj >= hi {
                    math::pos(*gj)
                } else {
                    *gj
                }
            }
            Regularizer::L1 { weight } => {
                if uj > 0.0 {
                    gj + weight
                } else if uj < 0.0 {
                    gj - weight
                } else {
                    math::pos(gj.abs() - weight)
                }
            }
        };
        stat_sq += r * r;
    }
    let mut res = math::sqrt(stat_sq).max(primal);
    let sum_mu: f64 = sol.duals.iter().sum();
    res = res.max((qp.hinge_weight - sum_mu - sol.dual_v).abs());
    res = res.max(math::pos(-sol.v)).max(math::pos(-sol.dual_v)).max((sol.dual_v * sol.v).abs());
    for (k, a) in qp.affine_values(&sol.u).iter().enumerate() {
        let slack = a - sol.v;
        let mu = sol.duals[k];
        res = res.max(math::pos(slack)).max(math::pos(-mu)).max((mu * slack).abs());
    }
    if res.is_nan() {
        f64::INFINITY
    } else {
        res
    }
}
