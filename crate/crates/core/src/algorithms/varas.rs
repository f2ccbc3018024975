//! VARAS: variance-reduced accelerated SSQP for finite sums.
//!
//! Epoch `s` computes the full gradient at the snapshot `x~_{s-1}` and runs
//! `T_s` inner steps. Each inner step forms the extrapolated point `y`, the
//! estimate `n~ = grad f_i(y) - grad f_i(x~) + grad f(x~)`, solves one QP
//! for `z` and mixes `x`, `z` and the snapshot. The snapshot is then replaced
//! by a `theta`-weighted average of the inner iterates; `z` carries over.
//!
//! The component gradients at the snapshot are kept from the full pass, so
//! an inner step evaluates a single component gradient.

use alloc::vec;
use alloc::vec::Vec;

use super::trace::Recorder;
use super::{diverged, is_divergence, solve_step_qp, Clock, NoClock, NoObserver, Observer, Reference};
use super::{RunConfig, RunOutput, RunStatus, RunTrace, StoppingRule};
use crate::error::invalid;
use crate::linalg::Matrix;
use crate::math;
use crate::problem::Regularizer;
use crate::problem::{full_gradient_with_components, sfo_query, ConstrainedProblem, ConstraintEval, OracleCounters};
use crate::qp::CanonicalQp;
use crate::rng;
use crate::schedules::{EpochParams, VarasRegime, VarasSchedule};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VarasState {
    /// `x~_{s-1}`
    pub snapshot: Vec<f64>,
    /// `grad f(x~_{s-1})`
    pub full_gradient: Vec<f64>,
    /// Rows `grad f_i(x~_{s-1})`.
    pub component_gradients: Matrix,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// Current epoch (0 before the first).
    pub s: u64,
    pub t: u64,
}

#[derive(Debug)]
pub struct VarasEvent<'a> {
    pub s: u64,
    pub t: u64,
    pub params: EpochParams,
    pub snapshot: &'a [f64],
    pub full_gradient: &'a [f64],
    pub index: usize,
    pub y: &'a [f64],
    pub z_prev: &'a [f64],
    pub z_plus: &'a [f64],
    pub z: &'a [f64],
    pub x: &'a [f64],
    pub estimate: &'a [f64],
}

/// `y_t` from `x_{t-1}`, `z_{t-1}` and the snapshot.
pub fn extrapolate(x: &[f64], z: &[f64], snapshot: &[f64], p: &EpochParams, mu: f64) -> Vec<f64> {
    let mb = mu * p.beta;
    let denom = 1.0 + mb * (1.0 - p.alpha);
    let cx = (1.0 + mb) * (1.0 - p.alpha - p.omega) / denom;
    let cz = p.alpha / denom;
    let cs = (1.0 + mb) * p.omega / denom;
    (0..x.len()).map(|j| cx * x[j] + cz * z[j] + cs * snapshot[j]).collect()
}

/// `z+ = (z + mu beta y) / (1 + mu beta)`
pub fn pull(z: &[f64], y: &[f64], p: &EpochParams, mu: f64) -> Vec<f64> {
    let mb = mu * p.beta;
    z.iter().zip(y).map(|(zj, yj)| (zj + mb * yj) / (1.0 + mb)).collect()
}

/// `grad f_i(y) - grad f_i(x~) + grad f(x~)` evaluated from scratch.
pub fn variance_reduced_gradient(
    problem: &dyn ConstrainedProblem,
    index: usize,
    y: &[f64],
    snapshot: &[f64],
    full_gradient: &[f64],
) -> Vec<f64> {
    let d = y.len();
    let mut at_y = vec![0.0; d];
    let mut at_snap = vec![0.0; d];
    problem.component(index, y, &mut at_y);
    problem.component(index, snapshot, &mut at_snap);
    (0..d).map(|j| at_y[j] - at_snap[j] + full_gradient[j]).collect()
}

/// The `z`-update QP in canonical form: `rho = alpha beta mu + alpha`,
/// `w = (alpha beta mu y + alpha z) / rho`, `l = alpha beta n~`,
/// `Gamma = gamma beta`, `b_k = g_k(y) - alpha <grad g_k(y), z+>`,
/// `A_k = alpha grad g_k(y)`, regularizer scaled by `alpha beta`.
#[allow(clippy::too_many_arguments)]
pub fn varas_qp(
    y: &[f64],
    z_prev: &[f64],
    z_plus: &[f64],
    estimate: &[f64],
    at_y: &ConstraintEval,
    p: &EpochParams,
    mu: f64,
    gamma: f64,
    regularizer: &Regularizer,
) -> CanonicalQp {
    let ab = p.alpha * p.beta;
    let rho = ab * mu + p.alpha;
    let anchor = (0..y.len()).map(|j| (ab * mu * y[j] + p.alpha * z_prev[j]) / rho).collect();
    let offsets =
        at_y.values.iter().enumerate().map(|(k, g)| g - p.alpha * math::dot(at_y.jacobian.row(k), z_plus)).collect();
    CanonicalQp {
        rho,
        anchor,
        linear: estimate.iter().map(|v| ab * v).collect(),
        regularizer: regularizer.scaled(ab),
        hinge_weight: gamma * p.beta,
        offsets,
        slopes: at_y.jacobian.scaled(p.alpha),
    }
}

pub fn varas_run(
    problem: &dyn ConstrainedProblem,
    schedule: &VarasSchedule,
    config: &RunConfig,
    reference: &Reference,
) -> Result<RunOutput> {
    varas_run_with(problem, schedule, config, reference, &NoClock, &mut NoObserver)
}

pub fn varas_run_with(
    problem: &dyn ConstrainedProblem,
    schedule: &VarasSchedule,
    config: &RunConfig,
    reference: &Reference,
    clock: &dyn Clock,
    observer: &mut dyn Observer,
) -> Result<RunOutput> {
    let n = problem.component_count();
    if n == 0 {
        return Err(Error::StreamingUnsupported);
    }
    config.validate(problem)?;
    schedule.validate()?;
    if schedule.components != n {
        return Err(invalid("VARAS schedule built for a different number of components"));
    }
    if matches!(config.stop, StoppingRule::Iterations(_)) {
        return Err(invalid("VARAS stops after a number of epochs or an SFO budget"));
    }
    if config.batch != 1 {
        log::warn!("VARAS draws one component per inner step; batch size {} ignored", config.batch);
    }
    let mu = match schedule.regime {
        VarasRegime::Convex => 0.0,
        VarasRegime::StronglyConvex => schedule.strong_convexity,
    };
    let stride = config.checkpoint_stride.unwrap_or(1);
    let d = problem.dim();
    let mut index_rng = rng::stream(config.seed, rng::INDEX_STREAM);
    let mut counters = OracleCounters::default();
    let mut recorder = Recorder::new(problem, config.gamma, reference, clock, config.count_checkpoints);
    let mut opts = config.qp_options();
    let mut duals: Option<Vec<f64>> = None;
    let mut warnings = 0u64;
    let mut status = RunStatus::Completed;
    let mut batch = Vec::with_capacity(1);

    recorder.record(0, &config.x0, &mut counters)?;
    let mut state = VarasState {
        snapshot: config.x0.clone(),
        full_gradient: vec![0.0; d],
        component_gradients: Matrix::zeros(0, d),
        x: config.x0.clone(),
        z: config.x0.clone(),
        s: 0,
        t: 0,
    };
    let mut last_recorded = 0;

    'epochs: while !config.should_stop(state.s, &counters) {
        state.s += 1;
        let s = state.s;
        let params = schedule.epoch_params(s);
        let weights = schedule.epoch_weights(s);
        log::debug!("varas epoch {s}: {params:?}, theta form {:?}", schedule.theta_form(s));
        let (g, table) = match full_gradient_with_components(problem, &state.snapshot, &mut counters) {
            Ok(v) => v,
            Err(e) if is_divergence(&e) => {
                status = RunStatus::Diverged { iteration: s };
                break;
            }
            Err(e) => return Err(e),
        };
        state.full_gradient = g;
        state.component_gradients = table;
        state.x.copy_from_slice(&state.snapshot);
        let mut weighted = vec![0.0; d];
        let mut weight_total = 0.0;
        let mut grad_i = vec![0.0; d];
        for t in 1..=params.inner_steps {
            state.t = t;
            let y = extrapolate(&state.x, &state.z, &state.snapshot, &params, mu);
            let z_plus = pull(&state.z, &y, &params, mu);
            rng::draw_batch(&mut index_rng, n, 1, &mut batch);
            let i = batch[0];
            let sample = match sfo_query(problem, &y, &batch, &mut counters) {
                Ok(v) => v,
                Err(e) if is_divergence(&e) => {
                    status = RunStatus::Diverged { iteration: s };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            grad_i.copy_from_slice(&sample.gradient);
            let snap_row = state.component_gradients.row(i);
            let estimate: Vec<f64> = (0..d).map(|j| grad_i[j] - snap_row[j] + state.full_gradient[j]).collect();
            let qp = varas_qp(
                &y,
                &state.z,
                &z_plus,
                &estimate,
                &sample.constraints,
                &params,
                mu,
                config.gamma,
                problem.regularizer(),
            );
            opts.initial_duals = if config.warm_start { duals.take() } else { None };
            let sol = solve_step_qp(&qp, &opts, counters.qmo_calls, &mut warnings)?;
            counters.qmo_calls += 1;
            let z_prev = core::mem::replace(&mut state.z, sol.u);
            duals = Some(sol.duals);
            for j in 0..d {
                state.x[j] = (1.0 - params.alpha - params.omega) * state.x[j]
                    + params.alpha * state.z[j]
                    + params.omega * state.snapshot[j];
            }
            observer.varas_step(&VarasEvent {
                s,
                t,
                params,
                snapshot: &state.snapshot,
                full_gradient: &state.full_gradient,
                index: i,
                y: &y,
                z_prev: &z_prev,
                z_plus: &z_plus,
                z: &state.z,
                x: &state.x,
                estimate: &estimate,
            });
            if diverged(&state.x) || diverged(&state.z) {
                status = RunStatus::Diverged { iteration: s };
                break 'epochs;
            }
            let w = weights[(t - 1) as usize];
            math::axpy(w, &state.x, &mut weighted);
            weight_total += w;
        }
        for j in 0..d {
            state.snapshot[j] = weighted[j] / weight_total;
        }
        if diverged(&state.snapshot) {
            status = RunStatus::Diverged { iteration: s };
            break;
        }
        if s % stride == 0 || config.should_stop(s, &counters) {
            recorder.record(s, &state.snapshot, &mut counters)?;
            last_recorded = s;
        }
    }
    if status == RunStatus::Completed && last_recorded != state.s {
        recorder.record(state.s, &state.snapshot, &mut counters)?;
    }
    Ok(RunOutput {
        x_last: state.snapshot,
        x_average: None,
        trace: RunTrace { rows: recorder.rows, status },
        counters,
        qp_warnings: warnings,
    })
}
