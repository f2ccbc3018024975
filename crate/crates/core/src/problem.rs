//! Constrained problems, the stochastic first-order oracle (SFO) and the
//! call accounting every trace metric is built on.
//!
//! A problem exposes its objective components `f_i`, its constraints `g_k`
//! and a separable regularizer `h`. Algorithms never evaluate a problem
//! directly; they go through [`sfo_query`] and [`full_gradient`], which keep
//! [`OracleCounters`] exact. Constraint values and gradients ride along with
//! every SFO call and are not counted separately.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::math;
use crate::{error::invalid, Error, Result};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// A convex objective `f = mean_i f_i` (or `E[f_xi]` for streaming oracles),
/// `m` smooth convex constraints and a simple regularizer.
///
/// Implementations must be pure functions of their inputs.
pub trait ConstrainedProblem {
    /// Decision dimension `d`.
    fn dim(&self) -> usize;

    /// Number of objective components `n`; `0` marks a streaming oracle whose
    /// component index is a sample identifier.
    fn component_count(&self) -> usize;

    /// Number of functional constraints `m`.
    fn constraint_count(&self) -> usize;

    /// Returns `f_i(x)` and writes `grad f_i(x)` into `grad`.
    fn component(&self, index: usize, x: &[f64], grad: &mut [f64]) -> f64;

    /// Returns `g_k(x)` and writes `grad g_k(x)` into `grad`.
    fn constraint(&self, k: usize, x: &[f64], grad: &mut [f64]) -> f64;

    fn regularizer(&self) -> &Regularizer;

    fn constants(&self) -> ProblemConstants;

    /// The constrained optimum, when the problem knows it (instrumentation only).
    fn known_optimum(&self) -> Option<&[f64]> {
        None
    }

    /// `f(x)` for streaming oracles, which cannot average over components.
    fn expected_objective(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// Smoothness, curvature and noise constants of a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ProblemConstants {
    /// `L_f`: every `f_i` is `L_f`-smooth.
    pub smoothness: f64,
    /// `L_g`: every `g_k` is `L_g`-smooth.
    pub constraint_smoothness: f64,
    /// `mu`: strong convexity of `f` (0 if merely convex).
    pub strong_convexity: f64,
    /// `sigma`: bound on the gradient noise at the optimum.
    pub gradient_noise: f64,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let ProblemConstants { smoothness, constraint_smoothness, strong_convexity, gradient_noise } = *self;
        if !(smoothness > 0.0 && smoothness.is_finite()) {
            return Err(invalid("L_f must be positive and finite"));
        }
        if !(constraint_smoothness >= 0.0 && strong_convexity >= 0.0 && gradient_noise >= 0.0) {
            return Err(invalid("L_g, mu and sigma must be nonnegative"));
        }
        if strong_convexity > smoothness {
            return Err(invalid("mu must not exceed L_f"));
        }
        Ok(())
    }

    /// `L = max{gamma L_g, L_f}`.
    pub fn penalized_smoothness(&self, gamma: f64) -> f64 {
        (gamma * self.constraint_smoothness).max(self.smoothness)
    }
}

/// The regularizer `h`: zero, the indicator of a box, or a weighted l1 norm.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    /// Indicator of `lower <= x <= upper`; infinite bounds are allowed.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    L1 {
        weight: f64,
    },
}

impl Regularizer {
    pub fn box_uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Regularizer::Box { lower: vec![lower; dim], upper: vec![upper; dim] }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Regularizer::Zero => Ok(()),
            Regularizer::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: lower.len().min(upper.len()) });
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u) || l.is_nan() || u.is_nan()) {
                    return Err(invalid("box bounds must satisfy lower <= upper"));
                }
                Ok(())
            }
            Regularizer::L1 { weight } => {
                if *weight >= 0.0 && weight.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("l1 weight must be nonnegative"))
                }
            }
        }
    }

    /// `h(x)`, or `+inf` outside the box.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::Box { .. } => {
                if self.contains(x) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    /// Whether `x` lies in the effective domain of `h`.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Regularizer::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
            }
            _ => true,
        }
    }

    /// The same regularizer multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Regularizer::L1 { weight } => Regularizer::L1 { weight: weight * c },
            other => other.clone(),
        }
    }

    /// Coordinate-wise proximal map: `argmin_u step*h(u) + (u - v)^2 / 2`.
    #[inline]
    pub fn prox_coord(&self, j: usize, v: f64, step: f64) -> f64 {
        match self {
            Regularizer::Zero => v,
            Regularizer::Box { lower, upper } => v.clamp(lower[j], upper[j]),
            Regularizer::L1 { weight } => {
                let t = weight * step;
                if v > t {
                    v - t
                } else if v < -t {
                    v + t
                } else {
                    0.0
                }
            }
        }
    }

    pub fn prox(&self, v: &[f64], step: f64, out: &mut [f64]) {
        for (j, (o, vj)) in out.iter_mut().zip(v).enumerate() {
            *o = self.prox_coord(j, *vj, step);
        }
    }

    pub fn project(&self, x: &mut [f64]) {
        if let Regularizer::Box { lower, upper } = self {
            for (j, v) in x.iter_mut().enumerate() {
                *v = v.clamp(lower[j], upper[j]);
            }
        }
    }
}

/// Call counters. `sfo_calls` counts component gradients: a batch of size
/// `b` costs `b`, a full pass costs `n`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct OracleCounters {
    pub sfo_calls: u64,
    pub qmo_calls: u64,
    pub full_gradient_passes: u64,
}

/// Constraint values `g_k(x)` and the `m x d` Jacobian with rows `grad g_k(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEval {
    pub values: Vec<f64>,
    pub jacobian: Matrix,
}

impl ConstraintEval {
    /// Offsets `g_k(x) - <grad g_k(x), x>` of the linearization at `x`.
    pub fn linearization_offsets(&self, x: &[f64]) -> Vec<f64> {
        self.values.iter().enumerate().map(|(k, g)| g - math::dot(self.jacobian.row(k), x)).collect()
    }
}

/// One SFO answer.
#[derive(Debug, Clone, PartialEq)]
pub struct SfoSample {
    pub indices: Vec<usize>,
    /// Batch mean of the component gradients.
    pub gradient: Vec<f64>,
    pub constraints: ConstraintEval,
    pub sfo_cost: u64,
}

fn check_point(problem: &dyn ConstrainedProblem, x: &[f64]) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: x.len() });
    }
    if !math::all_finite(x) {
        return Err(Error::NonFinite { what: "query point" });
    }
    Ok(())
}

fn check_index(problem: &dyn ConstrainedProblem, index: usize) -> Result<()> {
    let n = problem.component_count();
    if n > 0 && index >= n {
        return Err(Error::IndexOutOfRange { index, count: n });
    }
    Ok(())
}

/// All constraint values and gradients at `x`. Not counted: constraint
/// information is bundled with the SFO.
pub fn constraint_query(problem: &dyn ConstrainedProblem, x: &[f64]) -> Result<ConstraintEval> {
    check_point(problem, x)?;
    let (m, d) = (problem.constraint_count(), problem.dim());
    let mut values = Vec::with_capacity(m);
    let mut jacobian = Matrix::zeros(m, d);
    for k in 0..m {
        values.push(problem.constraint(k, x, jacobian.row_mut(k)));
    }
    if !math::all_finite(&values) || !jacobian.is_finite() {
        return Err(Error::NonFinite { what: "constraint" });
    }
    Ok(ConstraintEval { values, jacobian })
}

/// Queries the stochastic first-order oracle on a batch of indices.
pub fn sfo_query(
    problem: &dyn ConstrainedProblem,
    x: &[f64],
    batch: &[usize],
    counters: &mut OracleCounters,
) -> Result<SfoSample> {
    check_point(problem, x)?;
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    for &i in batch {
        check_index(problem, i)?;
    }
    let d = problem.dim();
    let mut gradient = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for &i in batch {
        let value = problem.component(i, x, &mut buf);
        if !value.is_finite() || !math::all_finite(&buf) {
            return Err(Error::NonFinite { what: "objective component" });
        }
        math::axpy(1.0, &buf, &mut gradient);
    }
    math::scale(1.0 / batch.len() as f64, &mut gradient);
    let constraints = constraint_query(problem, x)?;
    counters.sfo_calls += batch.len() as u64;
    Ok(SfoSample { indices: batch.to_vec(), gradient, constraints, sfo_cost: batch.len() as u64 })
}

/// Exact `grad f(x) = (1/n) sum_i grad f_i(x)`, summed in index order.
pub fn full_gradient(problem: &dyn ConstrainedProblem, x: &[f64], counters: &mut OracleCounters) -> Result<Vec<f64>> {
    full_gradient_impl(problem, x, counters, None)
}

/// Like [`full_gradient`], but also returns every component gradient as the
/// rows of an `n x d` matrix.
pub fn full_gradient_with_components(
    problem: &dyn ConstrainedProblem,
    x: &[f64],
    counters: &mut OracleCounters,
) -> Result<(Vec<f64>, Matrix)> {
    let mut table = Matrix::zeros(problem.component_count(), problem.dim());
    let g = full_gradient_impl(problem, x, counters, Some(&mut table))?;
    Ok((g, table))
}

fn full_gradient_impl(
    problem: &dyn ConstrainedProblem,
    x: &[f64],
    counters: &mut OracleCounters,
    mut table: Option<&mut Matrix>,
) -> Result<Vec<f64>> {
    let n = problem.component_count();
    if n == 0 {
        return Err(Error::StreamingUnsupported);
    }
    check_point(problem, x)?;
    let d = problem.dim();
    let mut sum = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for i in 0..n {
        let value = problem.component(i, x, &mut buf);
        if !value.is_finite() || !math::all_finite(&buf) {
            return Err(Error::NonFinite { what: "objective component" });
        }
        math::axpy(1.0, &buf, &mut sum);
        if let Some(t) = table.as_deref_mut() {
            t.row_mut(i).copy_from_slice(&buf);
        }
    }
    math::scale(1.0 / n as f64, &mut sum);
    counters.sfo_calls += n as u64;
    counters.full_gradient_passes += 1;
    Ok(sum)
}

/// `f(x)`, uncounted (instrumentation and reporting).
pub fn objective(problem: &dyn ConstrainedProblem, x: &[f64]) -> Result<f64> {
    check_point(problem, x)?;
    let n = problem.component_count();
    if n == 0 {
        return problem.expected_objective(x).ok_or(Error::StreamingUnsupported);
    }
    let mut buf = vec![0.0; problem.dim()];
    let total: f64 = (0..n).map(|i| problem.component(i, x, &mut buf)).sum();
    let f = total / n as f64;
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::NonFinite { what: "objective" })
    }
}

/// `f(x)` and `grad f(x)` without touching any counter.
pub fn objective_and_gradient(problem: &dyn ConstrainedProblem, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut scratch = OracleCounters::default();
    let g = full_gradient(problem, x, &mut scratch)?;
    Ok((objective(problem, x)?, g))
}

/// Bregman divergence `D_f(u, v) = f(u) - f(v) - <grad f(v), u - v>`.
pub fn bregman_divergence(problem: &dyn ConstrainedProblem, u: &[f64], v: &[f64]) -> Result<f64> {
    if problem.component_count() == 0 {
        return Err(Error::StreamingUnsupported);
    }
    let fu = objective(problem, u)?;
    let (fv, gv) = objective_and_gradient(problem, v)?;
    let lin: f64 = gv.iter().zip(u.iter().zip(v)).map(|(g, (a, b))| g * (a - b)).sum();
    Ok(fu - fv - lin)
}

/// Worst relative mismatch between analytic gradients and central finite
/// differences, over all components (or the first `max_components`) and all
/// constraints at `x`. The relative error of a gradient is
/// `||analytic - fd|| / max(1, ||analytic||)`.
pub fn finite_difference_error(problem: &dyn ConstrainedProblem, x: &[f64], step: f64, max_components: usize) -> f64 {
    let d = problem.dim();
    let mut analytic = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut xp = x.to_vec();
    let mut worst: f64 = 0.0;
    let mut check = |eval: &dyn Fn(&[f64], &mut [f64]) -> f64| {
        eval(x, &mut analytic);
        let mut err_sq = 0.0;
        for j in 0..d {
            let orig = xp[j];
            xp[j] = orig + step;
            let fp = eval(&xp, &mut scratch);
            xp[j] = orig - step;
            let fm = eval(&xp, &mut scratch);
            xp[j] = orig;
            let fd = (fp - fm) / (2.0 * step);
            err_sq += (fd - analytic[j]) * (fd - analytic[j]);
        }
        let rel = math::sqrt(err_sq) / math::norm(&analytic).max(1.0);
        worst = worst.max(rel);
    };
    let n = problem.component_count();
    let comps = if n == 0 { max_components } else { n.min(max_components) };
    for i in 0..comps {
        check(&|p: &[f64], g: &mut [f64]| problem.component(i, p, g));
    }
    for k in 0..problem.constraint_count() {
        check(&|p: &[f64], g: &mut [f64]| problem.constraint(k, p, g));
    }
    worst
}
