//! Runtime check of the three-point inequality satisfied by every SSQP step:
//!
//! ```text
//! <grad f_i(x_t), x_{t+1} - x*> + h(x_{t+1}) + gamma max_k [g_k(x_{t+1})]_+
//!     <= h(x*) + (||x_t - x*||^2 - ||x_{t+1} - x*||^2) / (2 eta)
//!        - (1/(2 eta) - gamma L_g / 2) ||x_{t+1} - x_t||^2
//! ```
//!
//! for any feasible `x*`.

use alloc::vec::Vec;

use super::ssqp::SsqpEvent;
use super::Observer;
use crate::math;
use crate::problem::{constraint_query, ConstrainedProblem};
use crate::Result;

/// One recorded SSQP step.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditStep {
    pub x: Vec<f64>,
    pub next: Vec<f64>,
    pub eta: f64,
    /// The stochastic gradient used by the step.
    pub gradient: Vec<f64>,
}

/// Observer that keeps every SSQP step.
#[derive(Debug, Default)]
pub struct TrajectoryRecorder {
    pub steps: Vec<AuditStep>,
}

impl Observer for TrajectoryRecorder {
    fn ssqp_step(&mut self, event: &SsqpEvent<'_>) {
        self.steps.push(AuditStep {
            x: event.x.to_vec(),
            next: event.next.to_vec(),
            eta: event.eta,
            gradient: event.sample.gradient.clone(),
        });
    }
}

/// Left side minus right side of the inequality; positive values violate it.
pub fn three_point_excess(
    problem: &dyn ConstrainedProblem,
    gamma: f64,
    x_star: &[f64],
    step: &AuditStep,
) -> Result<f64> {
    let reg = problem.regularizer();
    let lg = problem.constants().constraint_smoothness;
    let g_next = constraint_query(problem, &step.next)?;
    let shift: Vec<f64> = step.next.iter().zip(x_star).map(|(a, b)| a - b).collect();
    let lhs = math::dot(&step.gradient, &shift) + reg.value(&step.next) + gamma * math::max_hinge(&g_next.values);
    let inv = 1.0 / (2.0 * step.eta);
    let rhs = reg.value(x_star) + inv * (math::dist_sq(&step.x, x_star) - math::dist_sq(&step.next, x_star))
        - (inv - 0.5 * gamma * lg) * math::dist_sq(&step.next, &step.x);
    Ok(lhs - rhs)
}

/// Number of steps whose excess is above `slack`.
pub fn three_point_audit(
    problem: &dyn ConstrainedProblem,
    gamma: f64,
    x_star: &[f64],
    steps: &[AuditStep],
    slack: f64,
) -> Result<usize> {
    let mut violations = 0;
    for step in steps {
        if three_point_excess(problem, gamma, x_star, step)? > slack {
            violations += 1;
        }
    }
    Ok(violations)
}
