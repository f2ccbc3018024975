//! The outer loops: SSQP, SSQP-Skip and VARAS.
//!
//! Each `*_run` function draws indices from a seeded stream, charges the
//! oracle counters, solves one [`CanonicalQp`] per QP step and emits
//! [`RunTraceRow`]s at a fixed stride. The single-step functions are public
//! so tests can drive the recursions directly.

pub mod audit;
pub mod skip;
pub mod ssqp;
pub mod trace;
pub mod varas;

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::math;
use crate::problem::{ConstrainedProblem, OracleCounters};
use crate::qp::{solve_canonical_qp, CanonicalQp, QpOptions, QpSolution};
use crate::{Error, Result};

pub use trace::{Clock, NoClock, Reference, RunStatus, RunTrace, RunTraceRow};

/// Iterates beyond this norm count as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Default number of rows a trace aims for.
pub const DEFAULT_ROWS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum StoppingRule {
    /// Outer iterations (SSQP, SSQP-Skip, primal-dual).
    Iterations(u64),
    /// Epochs (VARAS).
    Epochs(u64),
    /// Stop once the SFO counter reaches the budget.
    SfoBudget(u64),
}

/// Which SSQP iterate the trace evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum ReportPoint {
    /// Stepsize-weighted average for convex schedules, last iterate otherwise.
    #[default]
    Auto,
    Averaged,
    Last,
}

/// Bounds of the initialization: `F(x0) - F_star <= b_gamma`,
/// `||x0 - x_star||^2 <= b_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct InitBounds {
    pub b_x: f64,
    pub b_gamma: f64,
}

impl InitBounds {
    /// `D0 = 2 B_gamma + (3 L_gamma / 2) B_x`.
    pub fn d0(&self, l_gamma: f64) -> f64 {
        2.0 * self.b_gamma + 1.5 * l_gamma * self.b_x
    }
}

#[cfg(feature = "serde")]
fn default_batch() -> usize {
    1
}

fn default_qp_tol() -> f64 {
    1e-9
}

fn default_qp_sweeps() -> usize {
    10_000
}

#[cfg(feature = "serde")]
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RunConfig {
    pub gamma: f64,
    pub stop: StoppingRule,
    #[cfg_attr(feature = "serde", serde(default = "default_batch"))]
    pub batch: usize,
    pub seed: u64,
    /// Rows every `stride` iterations; `None` means `ceil(T / 500)` (every
    /// epoch for VARAS).
    #[cfg_attr(feature = "serde", serde(default))]
    pub checkpoint_stride: Option<u64>,
    pub x0: Vec<f64>,
    /// Charge checkpoint evaluations to the SFO counter.
    #[cfg_attr(feature = "serde", serde(default))]
    pub count_checkpoints: bool,
    #[cfg_attr(feature = "serde", serde(default = "default_qp_tol"))]
    pub qp_tol: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_qp_sweeps"))]
    pub qp_max_sweeps: usize,
    /// Start each QP from the previous step's multipliers.
    #[cfg_attr(feature = "serde", serde(default = "default_true"))]
    pub warm_start: bool,
    #[cfg_attr(feature = "serde", serde(default))]
    pub report_point: ReportPoint,
    #[cfg_attr(feature = "serde", serde(default))]
    pub bounds: Option<InitBounds>,
}

impl RunConfig {
    pub fn new(gamma: f64, stop: StoppingRule, seed: u64, x0: Vec<f64>) -> Self {
        RunConfig {
            gamma,
            stop,
            batch: 1,
            seed,
            checkpoint_stride: None,
            x0,
            count_checkpoints: false,
            qp_tol: default_qp_tol(),
            qp_max_sweeps: default_qp_sweeps(),
            warm_start: true,
            report_point: ReportPoint::Auto,
            bounds: None,
        }
    }

    pub fn validate(&self, problem: &dyn ConstrainedProblem) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(invalid("gamma must be nonnegative and finite"));
        }
        if self.batch == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if self.x0.len() != problem.dim() {
            return Err(Error::DimensionMismatch { expected: problem.dim(), got: self.x0.len() });
        }
        if !math::all_finite(&self.x0) {
            return Err(Error::NonFinite { what: "initial point" });
        }
        if self.checkpoint_stride == Some(0) {
            return Err(invalid("checkpoint stride must be positive"));
        }
        if !(self.qp_tol > 0.0 && self.qp_tol <= 1e-4) {
            return Err(invalid("qp tolerance must lie in (0, 1e-4]"));
        }
        problem.constants().validate()?;
        problem.regularizer().validate(problem.dim())
    }

    pub(crate) fn qp_options(&self) -> QpOptions {
        QpOptions { tol: self.qp_tol, max_sweeps: self.qp_max_sweeps, initial_duals: None }
    }

    /// Iteration count implied by the stopping rule (estimated from the
    /// batch size under an SFO budget).
    pub(crate) fn iteration_horizon(&self) -> Result<u64> {
        match self.stop {
            StoppingRule::Iterations(t) => Ok(t),
            StoppingRule::SfoBudget(b) => Ok(b / self.batch as u64),
            StoppingRule::Epochs(_) => Err(invalid("epoch stopping rule applies to VARAS only")),
        }
    }

    pub(crate) fn stride(&self, horizon: u64) -> u64 {
        self.checkpoint_stride.unwrap_or_else(|| horizon.div_ceil(DEFAULT_ROWS).max(1))
    }

    pub(crate) fn should_stop(&self, t: u64, counters: &OracleCounters) -> bool {
        match self.stop {
            StoppingRule::Iterations(n) => t >= n,
            StoppingRule::SfoBudget(b) => counters.sfo_calls >= b,
            StoppingRule::Epochs(n) => t >= n,
        }
    }
}

/// Result of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Final iterate `x_T` (the snapshot for VARAS).
    pub x_last: Vec<f64>,
    /// Stepsize-weighted average (SSQP only).
    pub x_average: Option<Vec<f64>>,
    pub trace: RunTrace,
    pub counters: OracleCounters,
    /// QP solves accepted above tolerance.
    pub qp_warnings: u64,
}

/// Per-step callbacks for tests and audits. All methods default to no-ops.
pub trait Observer {
    fn ssqp_step(&mut self, _event: &ssqp::SsqpEvent<'_>) {}
    fn skip_step(&mut self, _event: &skip::SkipEvent<'_>) {}
    fn varas_step(&mut self, _event: &varas::VarasEvent<'_>) {}
}

/// Observer that ignores everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoObserver;

impl Observer for NoObserver {}

/// Iterate outside the divergence guard.
pub(crate) fn diverged(x: &[f64]) -> bool {
    !math::all_finite(x) || math::norm(x) > DIVERGENCE_NORM
}

/// Solves a step QP. A solve that exhausts its budget is accepted with a
/// warning when its residual is within `1e-6` of the data scale.
pub(crate) fn solve_step_qp(
    qp: &CanonicalQp,
    opts: &QpOptions,
    iteration: u64,
    warnings: &mut u64,
) -> Result<QpSolution> {
    let sol = solve_canonical_qp(qp, opts)?;
    if !sol.converged {
        let limit = 1e-6 * qp.scale().max(1.0);
        if sol.kkt_residual > limit || !math::all_finite(&sol.u) {
            return Err(Error::QpFailed { iteration, residual: sol.kkt_residual });
        }
        *warnings += 1;
        log::warn!("iteration {iteration}: qp accepted at kkt residual {:e}", sol.kkt_residual);
    }
    debug_assert!(
        qp.objective(&sol.u) <= qp.objective(&qp.anchor) + 1e-9 * qp.scale().max(1.0)
            || !qp.regularizer.contains(&qp.anchor),
        "qp step increased the model objective"
    );
    Ok(sol)
}

/// True when an oracle error means the iterates blew up rather than a
/// programming error.
pub(crate) fn is_divergence(err: &Error) -> bool {
    matches!(err, Error::NonFinite { .. })
}
