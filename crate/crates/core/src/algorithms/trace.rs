//! Checkpoint rows and the evaluator that fills them.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math;
use crate::penalty::{penalty_objective, violation_report};
use crate::problem::{ConstrainedProblem, OracleCounters};
use crate::{Error, Result};

/// Source of wall-clock time. The core crate has no clock of its own.
pub trait Clock {
    /// Seconds since the start of the run.
    fn elapsed_seconds(&self) -> f64;
}

/// A clock that always reads zero, which keeps traces bit-reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_seconds(&self) -> f64 {
        0.0
    }
}

/// One checkpoint. Metrics that need an unknown reference are `None`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RunTraceRow {
    /// Iteration (epoch for VARAS).
    pub iter: u64,
    pub sfo: u64,
    pub qmo: u64,
    /// `F(x) - F_star`
    pub gap: Option<f64>,
    /// `(F(x) - F_star) / F_star`, omitted when `|F_star| < 1e-12`.
    pub rel_gap: Option<f64>,
    pub max_viol: f64,
    pub sum_viol: f64,
    /// `||x - x_star||^2`
    pub dist_sq: Option<f64>,
    pub wall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(tag = "status", rename_all = "snake_case"))]
pub enum RunStatus {
    Completed,
    /// Iterates left `||x|| <= 1e12` or an evaluation went non-finite.
    Diverged {
        iteration: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<RunTraceRow>,
    pub status: RunStatus,
}

/// Known optimum used for instrumentation only.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Reference {
    #[cfg_attr(feature = "serde", serde(default))]
    pub x_star: Option<Vec<f64>>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub f_star: Option<f64>,
}

/// Threshold below which the relative gap is not reported.
pub const REL_GAP_FLOOR: f64 = 1e-12;

pub(crate) struct Recorder<'a> {
    problem: &'a dyn ConstrainedProblem,
    gamma: f64,
    reference: &'a Reference,
    clock: &'a dyn Clock,
    count_checkpoints: bool,
    pub rows: Vec<RunTraceRow>,
}

impl<'a> Recorder<'a> {
    pub fn new(
        problem: &'a dyn ConstrainedProblem,
        gamma: f64,
        reference: &'a Reference,
        clock: &'a dyn Clock,
        count_checkpoints: bool,
    ) -> Self {
        Recorder { problem, gamma, reference, clock, count_checkpoints, rows: Vec::new() }
    }

    pub fn record(&mut self, iter: u64, x: &[f64], counters: &mut OracleCounters) -> Result<()> {
        let counted = if self.count_checkpoints { Some(&mut *counters) } else { None };
        let value = match penalty_objective(self.problem, self.gamma, x, counted) {
            Ok(v) => Some(v.value),
            Err(Error::StreamingUnsupported) => None,
            Err(e) => return Err(e),
        };
        let gap = match (value, self.reference.f_star) {
            (Some(v), Some(f)) => Some(v - f),
            _ => None,
        };
        let rel_gap = match (gap, self.reference.f_star) {
            (Some(g), Some(f)) if f.abs() >= REL_GAP_FLOOR => Some(g / f),
            _ => None,
        };
        let viol = violation_report(self.problem, x)?;
        let dist_sq = self.reference.x_star.as_deref().map(|xs| math::dist_sq(x, xs));
        self.rows.push(RunTraceRow {
            iter,
            sfo: counters.sfo_calls,
            qmo: counters.qmo_calls,
            gap,
            rel_gap,
            max_viol: viol.max_violation,
            sum_viol: viol.sum_violation,
            dist_sq,
            wall: self.clock.elapsed_seconds(),
        });
        Ok(())
    }
}
