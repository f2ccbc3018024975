//! Primal-dual stochastic subgradient baseline.
//!
//! ```text
//! x      <- prox_{eta_x h}(x - eta_x (grad f_i(x) + sum_k lambda_k grad g_k(x)))
//! lambda <- [lambda + eta_lambda g(x)]_+
//! ```
//!
//! No QP is solved, so QMO stays zero.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::algorithms::trace::Recorder;
use crate::algorithms::{
    diverged, is_divergence, Clock, NoClock, Reference, RunConfig, RunOutput, RunStatus, RunTrace,
};
use crate::error::invalid;
use crate::math;
use crate::problem::{sfo_query, ConstrainedProblem, OracleCounters, Regularizer, SfoSample};
use crate::rng;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(tag = "rule", rename_all = "snake_case"))]
pub enum StepRule {
    Constant {
        eta_x: f64,
        eta_lambda: f64,
    },
    /// Both stepsizes divided by `sqrt(t + 1)`.
    InverseSqrt {
        eta_x: f64,
        eta_lambda: f64,
    },
}

impl StepRule {
    pub fn steps(&self, t: u64) -> (f64, f64) {
        match *self {
            StepRule::Constant { eta_x, eta_lambda } => (eta_x, eta_lambda),
            StepRule::InverseSqrt { eta_x, eta_lambda } => {
                let r = math::sqrt((t + 1) as f64);
                (eta_x / r, eta_lambda / r)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.steps(0);
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            Ok(())
        } else {
            Err(invalid("primal-dual stepsizes must be positive"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PrimalDualParams {
    pub rule: StepRule,
    /// Clip the primal direction to this norm.
    #[cfg_attr(feature = "serde", serde(default))]
    pub clip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualState {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub t: u64,
}

impl PrimalDualState {
    pub fn new(x0: Vec<f64>, constraints: usize) -> Self {
        PrimalDualState { x: x0, lambda: vec![0.0; constraints], t: 0 }
    }
}

/// One step from the oracle answer at `state.x`.
pub fn primal_dual_step(
    state: &mut PrimalDualState,
    sample: &SfoSample,
    eta_x: f64,
    eta_lambda: f64,
    clip: Option<f64>,
    regularizer: &Regularizer,
) {
    let d = state.x.len();
    let mut direction = sample.gradient.clone();
    let mut weighted = vec![0.0; d];
    sample.constraints.jacobian.mul_t_vec(&state.lambda, &mut weighted);
    math::axpy(1.0, &weighted, &mut direction);
    if let Some(c) = clip {
        let norm = math::norm(&direction);
        if norm > c {
            math::scale(c / norm, &mut direction);
        }
    }
    let moved: Vec<f64> = state.x.iter().zip(&direction).map(|(x, g)| x - eta_x * g).collect();
    regularizer.prox(&moved, eta_x, &mut state.x);
    for (l, g) in state.lambda.iter_mut().zip(&sample.constraints.values) {
        *l = math::pos(*l + eta_lambda * g);
    }
    state.t += 1;
}

pub fn primal_dual_run(
    problem: &dyn ConstrainedProblem,
    params: &PrimalDualParams,
    config: &RunConfig,
    reference: &Reference,
) -> Result<RunOutput> {
    primal_dual_run_with(problem, params, config, reference, &NoClock)
}

pub fn primal_dual_run_with(
    problem: &dyn ConstrainedProblem,
    params: &PrimalDualParams,
    config: &RunConfig,
    reference: &Reference,
    clock: &dyn Clock,
) -> Result<RunOutput> {
    config.validate(problem)?;
    params.rule.validate()?;
    if let Some(c) = params.clip {
        if !(c > 0.0) {
            return Err(invalid("clipping norm must be positive"));
        }
    }
    let horizon = config.iteration_horizon()?;
    let stride = config.stride(horizon);
    let n = problem.component_count();
    let mut index_rng = rng::stream(config.seed, rng::INDEX_STREAM);
    let mut counters = OracleCounters::default();
    let mut recorder = Recorder::new(problem, config.gamma, reference, clock, config.count_checkpoints);
    let mut state = PrimalDualState::new(config.x0.clone(), problem.constraint_count());
    let mut batch = Vec::with_capacity(config.batch);
    let mut status = RunStatus::Completed;
    recorder.record(0, &state.x, &mut counters)?;
    let mut last_recorded = 0;
    while !config.should_stop(state.t, &counters) {
        let t = state.t;
        rng::draw_batch(&mut index_rng, n, config.batch, &mut batch);
        let sample = match sfo_query(problem, &state.x, &batch, &mut counters) {
            Ok(s) => s,
            Err(e) if is_divergence(&e) => {
                status = RunStatus::Diverged { iteration: t };
                break;
            }
            Err(e) => return Err(e),
        };
        let (eta_x, eta_lambda) = params.rule.steps(t);
        primal_dual_step(&mut state, &sample, eta_x, eta_lambda, params.clip, problem.regularizer());
        if diverged(&state.x) || !math::all_finite(&state.lambda) {
            status = RunStatus::Diverged { iteration: state.t };
            break;
        }
        if state.t % stride == 0 || config.should_stop(state.t, &counters) {
            recorder.record(state.t, &state.x, &mut counters)?;
            last_recorded = state.t;
        }
    }
    if status == RunStatus::Completed && last_recorded != state.t {
        recorder.record(state.t, &state.x, &mut counters)?;
    }
    Ok(RunOutput {
        x_last: state.x,
        x_average: None,
        trace: RunTrace { rows: recorder.rows, status },
        counters,
        qp_warnings: 0,
    })
}
