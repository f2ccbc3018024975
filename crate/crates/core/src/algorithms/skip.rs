//! SSQP-Skip: a control variate `y` lets most iterations skip the QP.
//!
//! Every iteration takes the drift step `x~ = x - eta (grad f_i(x) - y)`.
//! With probability `p` the QP with `rho = p / eta`, anchor `x~`, linear
//! term `y` and constraints linearized at `x~` is solved; otherwise the
//! drift point is kept. The control variate then moves by
//! `gain * (x_next - x~)`, which is zero on skipped iterations.

use alloc::vec::Vec;

use rand::Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::trace::Recorder;
use super::{diverged, is_divergence, solve_step_qp, Clock, NoClock, NoObserver, Observer, Reference};
use super::{RunConfig, RunOutput, RunStatus, RunTrace};
use crate::math;
use crate::problem::{
    constraint_query, sfo_query, ConstrainedProblem, ConstraintEval, OracleCounters, Regularizer, SfoSample,
};
use crate::qp::{CanonicalQp, QpOptions, QpSolution};
use crate::rng::{self, RunRng};
use crate::schedules::SkipSchedule;
use crate::Result;

/// Gain of the control-variate update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum ControlGain {
    /// `p / (2 eta)`, as displayed in the algorithm.
    #[default]
    Half,
    /// `p / eta`, the ratio used by ProxSkip.
    Full,
}

impl ControlGain {
    pub fn value(self, eta: f64, p: f64) -> f64 {
        match self {
            ControlGain::Half => p / (2.0 * eta),
            ControlGain::Full => p / eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: u64,
    /// Stream for the Bernoulli coins, separate from the index stream.
    pub coins: RunRng,
    pub duals: Option<Vec<f64>>,
}

impl SkipState {
    pub fn new(x0: Vec<f64>, y0: Vec<f64>, seed: u64) -> Self {
        SkipState { x: x0, y: y0, t: 0, coins: rng::stream(seed, rng::COIN_STREAM), duals: None }
    }
}

#[derive(Debug)]
pub struct SkipEvent<'a> {
    pub t: u64,
    pub x: &'a [f64],
    /// Drift point `x~_{t+1}`.
    pub drift: &'a [f64],
    pub next: &'a [f64],
    pub y: &'a [f64],
    pub eta: f64,
    pub p: f64,
    pub sample: &'a SfoSample,
    pub solution: Option<&'a QpSolution>,
}

/// The QP of a non-skipped step: `rho = p / eta`, `w = x~`, `l = y`,
/// hinge linearized at `x~`.
pub fn skip_qp(
    drift: &[f64],
    y: &[f64],
    at_drift: &ConstraintEval,
    eta: f64,
    p: f64,
    gamma: f64,
    regularizer: &Regularizer,
) -> CanonicalQp {
    CanonicalQp {
        rho: p / eta,
        anchor: drift.to_vec(),
        linear: y.to_vec(),
        regularizer: regularizer.clone(),
        hinge_weight: gamma,
        offsets: at_drift.linearization_offsets(drift),
        slopes: at_drift.jacobian.clone(),
    }
}

/// Outcome of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipStep {
    pub drift: Vec<f64>,
    pub solution: Option<QpSolution>,
}

/// One SSQP-Skip step. Constraint information at the drift point comes with
/// the oracle and is not charged separately.
#[allow(clippy::too_many_arguments)]
pub fn ssqp_skip_step(
    state: &mut SkipState,
    problem: &dyn ConstrainedProblem,
    sample: &SfoSample,
    eta: f64,
    p: f64,
    gamma: f64,
    gain: ControlGain,
    opts: &QpOptions,
    counters: &mut OracleCounters,
) -> Result<SkipStep> {
    let drift: Vec<f64> =
        state.x.iter().zip(&sample.gradient).zip(&state.y).map(|((x, g), y)| x - eta * (g - y)).collect();
    let coin: f64 = state.coins.random();
    let solution = if coin < p {
        let at_drift = constraint_query(problem, &drift)?;
        let qp = skip_qp(&drift, &state.y, &at_drift, eta, p, gamma, problem.regularizer());
        let mut warnings = 0;
        let sol = solve_step_qp(&qp, opts, state.t, &mut warnings)?;
        counters.qmo_calls += 1;
        Some(sol)
    } else {
        None
    };
    match &solution {
        Some(sol) => {
            let k = gain.value(eta, p);
            for j in 0..state.x.len() {
                state.y[j] += k * (sol.u[j] - drift[j]);
            }
            state.x.copy_from_slice(&sol.u);
        }
        None => state.x.copy_from_slice(&drift),
    }
    state.t += 1;
    Ok(SkipStep { drift, solution })
}

pub fn ssqp_skip_run(
    problem: &dyn ConstrainedProblem,
    schedule: &SkipSchedule,
    gain: ControlGain,
    config: &RunConfig,
    reference: &Reference,
) -> Result<RunOutput> {
    ssqp_skip_run_with(problem, schedule, gain, config, reference, &NoClock, &mut NoObserver)
}

pub fn ssqp_skip_run_with(
    problem: &dyn ConstrainedProblem,
    schedule: &SkipSchedule,
    gain: ControlGain,
    config: &RunConfig,
    reference: &Reference,
    clock: &dyn Clock,
    observer: &mut dyn Observer,
) -> Result<RunOutput> {
    config.validate(problem)?;
    schedule.validate()?;
    let horizon = config.iteration_horizon()?;
    let stride = config.stride(horizon);
    let l = schedule.smoothness;
    if schedule.stepsize(0) > schedule.probability(0) / (2.0 * l) * (1.0 + 1e-12) {
        log::warn!("ssqp-skip: eta_0 exceeds p_0 / (2 L)");
    }

    let n = problem.component_count();
    let mut index_rng = rng::stream(config.seed, rng::INDEX_STREAM);
    let mut counters = OracleCounters::default();
    let mut recorder = Recorder::new(problem, config.gamma, reference, clock, config.count_checkpoints);
    let mut batch = Vec::with_capacity(config.batch);
    let mut opts = config.qp_options();
    let mut warnings = 0u64;
    let mut status = RunStatus::Completed;

    recorder.record(0, &config.x0, &mut counters)?;
    // y_0 = grad f_{i_0}(x_0)
    rng::draw_batch(&mut index_rng, n, config.batch, &mut batch);
    let first = sfo_query(problem, &config.x0, &batch, &mut counters)?;
    let mut state = SkipState::new(config.x0.clone(), first.gradient, config.seed);
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
        let (eta, p) = schedule.parameters(t);
        opts.initial_duals = if config.warm_start { state.duals.clone() } else { None };
        let x_prev = state.x.clone();
        let step = match ssqp_skip_step(&mut state, problem, &sample, eta, p, config.gamma, gain, &opts, &mut counters)
        {
            Ok(s) => s,
            Err(e) if is_divergence(&e) => {
                status = RunStatus::Diverged { iteration: t };
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(sol) = &step.solution {
            if !sol.converged {
                warnings += 1;
            }
            state.duals = Some(sol.duals.clone());
        }
        observer.skip_step(&SkipEvent {
            t,
            x: &x_prev,
            drift: &step.drift,
            next: &state.x,
            y: &state.y,
            eta,
            p,
            sample: &sample,
            solution: step.solution.as_ref(),
        });
        if diverged(&state.x) || !math::all_finite(&state.y) {
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
        qp_warnings: warnings,
    })
}
