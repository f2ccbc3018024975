//! SSQP: one prox-linear QP per stochastic gradient.

use alloc::vec;
use alloc::vec::Vec;

use super::trace::Recorder;
use super::{diverged, is_divergence, solve_step_qp, Clock, NoClock, NoObserver, Observer, Reference};
use super::{ReportPoint, RunConfig, RunOutput, RunStatus, RunTrace};
use crate::math;
use crate::problem::{sfo_query, ConstrainedProblem, OracleCounters, Regularizer, SfoSample};
use crate::qp::{CanonicalQp, QpOptions, QpSolution};
use crate::rng;
use crate::schedules::SsqpSchedule;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SsqpState {
    pub x: Vec<f64>,
    pub t: u64,
    /// `sum_t eta_t x_{t+1}`
    pub weighted_sum: Vec<f64>,
    /// `sum_t eta_t`
    pub weight_total: f64,
    /// Multipliers of the previous QP, used as a warm start.
    pub duals: Option<Vec<f64>>,
}

impl SsqpState {
    pub fn new(x0: Vec<f64>) -> Self {
        let d = x0.len();
        SsqpState { x: x0, t: 0, weighted_sum: vec![0.0; d], weight_total: 0.0, duals: None }
    }

    /// `x_bar = sum eta_t x_t / sum eta_t` (the current point before any step).
    pub fn averaged(&self) -> Vec<f64> {
        if self.weight_total == 0.0 {
            return self.x.clone();
        }
        self.weighted_sum.iter().map(|s| s / self.weight_total).collect()
    }
}

/// Passed to [`Observer::ssqp_step`] after every step.
#[derive(Debug)]
pub struct SsqpEvent<'a> {
    pub t: u64,
    pub x: &'a [f64],
    pub next: &'a [f64],
    pub eta: f64,
    pub sample: &'a SfoSample,
    pub solution: &'a QpSolution,
}

/// The SSQP subproblem at `x` in canonical form: `rho = 1/eta`, `w = x`,
/// `l = grad`, `Gamma = gamma`, and the constraints linearized at `x`.
pub fn ssqp_qp(x: &[f64], sample: &SfoSample, eta: f64, gamma: f64, regularizer: &Regularizer) -> CanonicalQp {
    CanonicalQp {
        rho: 1.0 / eta,
        anchor: x.to_vec(),
        linear: sample.gradient.clone(),
        regularizer: regularizer.clone(),
        hinge_weight: gamma,
        offsets: sample.constraints.linearization_offsets(x),
        slopes: sample.constraints.jacobian.clone(),
    }
}

/// One SSQP step: solves the QP, moves to its minimizer, updates the running
/// average with weight `eta` and charges one QMO.
pub fn ssqp_step(
    state: &mut SsqpState,
    sample: &SfoSample,
    eta: f64,
    gamma: f64,
    regularizer: &Regularizer,
    opts: &QpOptions,
    counters: &mut OracleCounters,
) -> Result<QpSolution> {
    let qp = ssqp_qp(&state.x, sample, eta, gamma, regularizer);
    let mut warnings = 0;
    let sol = solve_step_qp(&qp, opts, state.t, &mut warnings)?;
    counters.qmo_calls += 1;
    state.x.copy_from_slice(&sol.u);
    math::axpy(eta, &sol.u, &mut state.weighted_sum);
    state.weight_total += eta;
    state.t += 1;
    Ok(sol)
}

pub fn ssqp_run(
    problem: &dyn ConstrainedProblem,
    schedule: &SsqpSchedule,
    config: &RunConfig,
    reference: &Reference,
) -> Result<RunOutput> {
    ssqp_run_with(problem, schedule, config, reference, &NoClock, &mut NoObserver)
}

pub fn ssqp_run_with(
    problem: &dyn ConstrainedProblem,
    schedule: &SsqpSchedule,
    config: &RunConfig,
    reference: &Reference,
    clock: &dyn Clock,
    observer: &mut dyn Observer,
) -> Result<RunOutput> {
    config.validate(problem)?;
    schedule.validate()?;
    let horizon = config.iteration_horizon()?;
    let stride = config.stride(horizon);
    let use_average = match config.report_point {
        ReportPoint::Averaged => true,
        ReportPoint::Last => false,
        ReportPoint::Auto => !matches!(schedule, SsqpSchedule::StronglyConvex { .. }),
    };
    let constants = problem.constants();
    let lemma_step = 1.0 / (2.0 * (constants.smoothness + constants.penalized_smoothness(config.gamma)));
    if schedule.stepsize(0) > lemma_step {
        log::warn!("ssqp: stepsize {} exceeds the certified bound {lemma_step}", schedule.stepsize(0));
    }

    let n = problem.component_count();
    let mut index_rng = rng::stream(config.seed, rng::INDEX_STREAM);
    let mut counters = OracleCounters::default();
    let mut recorder = Recorder::new(problem, config.gamma, reference, clock, config.count_checkpoints);
    let mut state = SsqpState::new(config.x0.clone());
    let mut opts = config.qp_options();
    let mut batch = Vec::with_capacity(config.batch);
    let mut warnings = 0u64;
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
        let eta = schedule.stepsize(t);
        opts.initial_duals = if config.warm_start { state.duals.take() } else { None };
        let x_prev = state.x.clone();
        let sol = ssqp_step(&mut state, &sample, eta, config.gamma, problem.regularizer(), &opts, &mut counters)?;
        if !sol.converged {
            warnings += 1;
        }
        observer.ssqp_step(&SsqpEvent { t, x: &x_prev, next: &state.x, eta, sample: &sample, solution: &sol });
        state.duals = Some(sol.duals);
        if diverged(&state.x) {
            status = RunStatus::Diverged { iteration: state.t };
            break;
        }
        if state.t % stride == 0 || config.should_stop(state.t, &counters) {
            let point = if use_average { state.averaged() } else { state.x.clone() };
            recorder.record(state.t, &point, &mut counters)?;
            last_recorded = state.t;
        }
    }
    if status == RunStatus::Completed && last_recorded != state.t {
        let point = if use_average { state.averaged() } else { state.x.clone() };
        recorder.record(state.t, &point, &mut counters)?;
    }
    let x_average = Some(state.averaged());
    Ok(RunOutput {
        x_last: state.x,
        x_average,
        trace: RunTrace { rows: recorder.rows, status },
        counters,
        qp_warnings: warnings,
    })
}
