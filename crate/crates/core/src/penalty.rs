//! Exact-penalty merit function `F(x) = f(x) + h(x) + gamma * max{0, g_k(x)}`
//! and constraint-violation metrics.

use crate::math;
use crate::problem::{self, constraint_query, ConstrainedProblem, OracleCounters};
use crate::{error::invalid, Result};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Smallest penalty certified by a Slater point: `gamma = beta / nu`.
pub fn gamma_from_slater(beta: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(invalid("slater margin nu must be positive"));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(invalid("slater gap beta must be nonnegative"));
    }
    Ok(beta / nu)
}

/// Where the penalty parameter came from.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum GammaProvenance {
    /// `gamma >= beta / nu` for a known Slater point.
    Certified { nu: f64, beta: f64 },
    /// A user hyperparameter.
    Tuned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PenaltyConfig {
    pub gamma: f64,
    pub provenance: GammaProvenance,
}

impl PenaltyConfig {
    pub fn tuned(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(invalid("gamma must be positive"));
        }
        log::info!("penalty gamma = {gamma} (tuned)");
        Ok(PenaltyConfig { gamma, provenance: GammaProvenance::Tuned })
    }

    /// Uses `gamma` if given (it must dominate `beta / nu`), else the
    /// minimal certified value.
    pub fn certified(nu: f64, beta: f64, gamma: Option<f64>) -> Result<Self> {
        let floor = gamma_from_slater(beta, nu)?;
        let gamma = gamma.unwrap_or(floor);
        if gamma < floor {
            return Err(invalid("gamma below the certified value beta / nu"));
        }
        if !(gamma > 0.0) {
            return Err(invalid("gamma must be positive"));
        }
        log::info!("penalty gamma = {gamma} (certified, beta/nu = {floor})");
        Ok(PenaltyConfig { gamma, provenance: GammaProvenance::Certified { nu, beta } })
    }

    pub fn is_certified(&self) -> bool {
        matches!(self.provenance, GammaProvenance::Certified { .. })
    }
}

/// Value of the penalized objective. Outside the domain of `h` the value is
/// `+inf` and `in_domain` is false.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyValue {
    pub value: f64,
    pub in_domain: bool,
}

/// `F(x)`. When `counters` is given the evaluation is charged as one full
/// pass (`n` SFO calls).
pub fn penalty_objective(
    problem: &dyn ConstrainedProblem,
    gamma: f64,
    x: &[f64],
    counters: Option<&mut OracleCounters>,
) -> Result<PenaltyValue> {
    let reg = problem.regularizer();
    if !reg.contains(x) {
        return Ok(PenaltyValue { value: f64::INFINITY, in_domain: false });
    }
    let f = problem::objective(problem, x)?;
    let g = constraint_query(problem, x)?;
    if let Some(c) = counters {
        c.sfo_calls += problem.component_count() as u64;
        c.full_gradient_passes += 1;
    }
    Ok(PenaltyValue { value: f + reg.value(x) + gamma * math::max_hinge(&g.values), in_domain: true })
}

/// `F` from already evaluated parts.
pub fn penalty_from_parts(f_plus_h: f64, gamma: f64, constraint_values: &[f64]) -> f64 {
    f_plus_h + gamma * math::max_hinge(constraint_values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationReport {
    /// `max_k [g_k(x)]_+`
    pub max_violation: f64,
    /// `sum_k [g_k(x)]_+`
    pub sum_violation: f64,
    /// Smallest index attaining the max; `None` when feasible.
    pub worst_index: Option<usize>,
}

impl ViolationReport {
    pub fn from_values(values: &[f64]) -> Self {
        let mut max = 0.0;
        let mut sum = 0.0;
        let mut worst = None;
        for (k, g) in values.iter().enumerate() {
            let v = math::pos(*g);
            sum += v;
            if v > max {
                max = v;
                worst = Some(k);
            }
        }
        ViolationReport { max_violation: max, sum_violation: sum, worst_index: worst }
    }
}

pub fn violation_report(problem: &dyn ConstrainedProblem, x: &[f64]) -> Result<ViolationReport> {
    Ok(ViolationReport::from_values(&constraint_query(problem, x)?.values))
}
