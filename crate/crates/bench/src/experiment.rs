//! Run orchestration: build the problem, resolve the penalty, reference and
//! schedule, run every seed and persist traces with a metadata document.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use ssqp_core::algorithms::skip::{ssqp_skip_run_with, ControlGain};
use ssqp_core::algorithms::ssqp::ssqp_run_with;
use ssqp_core::algorithms::varas::varas_run_with;
use ssqp_core::algorithms::{Clock, NoClock, NoObserver, Reference, RunConfig, RunOutput, RunStatus, RunTraceRow};
use ssqp_core::baselines::{primal_dual_run_with, PrimalDualParams};
use ssqp_core::penalty::PenaltyConfig;
use ssqp_core::problems::reference::{brute_force_optimum, quadratic_reference, ReferenceOptions};
use ssqp_core::problems::regression::{RegressionSource, ResidualRegressionProblem};
use ssqp_core::problems::spectral::{spectral_least_squares, SpectralInstance};
use ssqp_core::problems::usv::UsvProblem;
use ssqp_core::schedules::{SkipSchedule, SsqpSchedule, VarasRegime, VarasSchedule};
use ssqp_core::{math, ConstrainedProblem, OracleCounters, ProblemConstants};

use crate::config::{
    AlgorithmSpec, BenchConfig, GammaSpec, InitialPoint, ProblemSpec, ReferenceSpec, SsqpScheduleSpec,
};
use crate::{data, trace_io, BenchError};

pub const METADATA_FILE: &str = "metadata.json";

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed_{seed}.csv")
}

/// Measured seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn start() -> Self {
        WallClock { start: Instant::now() }
    }
}

impl Clock for WallClock {
    fn elapsed_seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

pub enum BuiltProblem {
    Regression(Box<ResidualRegressionProblem>),
    Usv(Box<UsvProblem>),
    Spectral(Box<SpectralInstance>),
}

impl BuiltProblem {
    pub fn build(spec: &ProblemSpec) -> Result<Self, BenchError> {
        Ok(match spec {
            ProblemSpec::Regression { generator, data_file, labels_in_file } => {
                let source = match data_file {
                    Some(path) => {
                        let (features, labels) = data::load_regression_file(path, *labels_in_file)?;
                        RegressionSource::Data { features, labels }
                    }
                    None => RegressionSource::Synthetic,
                };
                BuiltProblem::Regression(Box::new(ResidualRegressionProblem::generate(generator, source)?))
            }
            ProblemSpec::Usv { generator } => BuiltProblem::Usv(Box::new(UsvProblem::generate(generator)?)),
            ProblemSpec::Spectral { seed, components, spectrum, halfspaces, noise } => BuiltProblem::Spectral(
                Box::new(spectral_least_squares(*seed, *components, spectrum, *halfspaces, *noise)?),
            ),
        })
    }

    pub fn problem(&self) -> &dyn ConstrainedProblem {
        match self {
            BuiltProblem::Regression(p) => p.as_ref(),
            BuiltProblem::Usv(p) => p.as_ref(),
            BuiltProblem::Spectral(s) => &s.problem,
        }
    }

    /// Strictly feasible point, margin `nu` and gap bound `beta`.
    pub fn slater(&self) -> Option<(Vec<f64>, f64, f64)> {
        match self {
            BuiltProblem::Regression(p) => {
                let s = p.slater();
                Some((s.point.clone(), s.nu, s.beta))
            }
            BuiltProblem::Spectral(s) => Some((s.slater_point.clone(), s.nu, s.beta)),
            BuiltProblem::Usv(_) => None,
        }
    }

    pub fn initial_point(&self, choice: &InitialPoint) -> Result<Vec<f64>, BenchError> {
        let d = self.problem().dim();
        let x = match choice {
            InitialPoint::Default => match self {
                BuiltProblem::Usv(p) => p.straight_line(),
                _ => vec![0.0; d],
            },
            InitialPoint::Zeros => vec![0.0; d],
            InitialPoint::Slater => {
                self.slater().ok_or_else(|| BenchError::Config("problem has no Slater point".into()))?.0
            }
            InitialPoint::Point(x) => x.clone(),
        };
        if x.len() != d {
            return Err(BenchError::Config(format!("initial point has length {}, problem dimension is {d}", x.len())));
        }
        Ok(x)
    }
}

pub fn resolve_penalty(spec: &GammaSpec, problem: &BuiltProblem) -> Result<PenaltyConfig, BenchError> {
    match *spec {
        GammaSpec::Tuned { value } => Ok(PenaltyConfig::tuned(value)?),
        GammaSpec::Certified { factor } => {
            let (_, nu, beta) = problem.slater().ok_or_else(|| {
                BenchError::Config("certified gamma needs a problem with a Slater certificate".into())
            })?;
            let floor = ssqp_core::penalty::gamma_from_slater(beta, nu)?;
            Ok(PenaltyConfig::certified(nu, beta, Some(factor * floor))?)
        }
    }
}

pub fn resolve_reference(
    spec: &ReferenceSpec,
    problem: &BuiltProblem,
    gamma: f64,
    x0: &[f64],
) -> Result<Reference, BenchError> {
    let d = problem.problem().dim();
    let reference = match spec {
        ReferenceSpec::None => Reference::default(),
        ReferenceSpec::Solve => brute_force_optimum(problem.problem(), gamma, x0, &ReferenceOptions::default())
            .map_err(|e| BenchError::Reference(e.to_string()))?,
        ReferenceSpec::Enumerate => match problem {
            BuiltProblem::Spectral(s) => {
                quadratic_reference(&s.problem, gamma).map_err(|e| BenchError::Reference(e.to_string()))?
            }
            _ => {
                return Err(BenchError::Config("enumeration needs a quadratic problem with affine constraints".into()))
            }
        },
        ReferenceSpec::Given { x_star, f_star } => Reference { x_star: x_star.clone(), f_star: *f_star },
    };
    if reference.x_star.as_ref().is_some_and(|x| x.len() != d) {
        return Err(BenchError::Config("reference point has the wrong dimension".into()));
    }
    Ok(reference)
}

/// The algorithm with every derived constant filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ResolvedAlgorithm {
    Ssqp { schedule: SsqpSchedule },
    SsqpSkip { schedule: SkipSchedule, gain: ControlGain, expected_qmo: Option<f64> },
    Varas { schedule: VarasSchedule },
    PrimalDual { params: PrimalDualParams },
}

pub fn resolve_algorithm(
    cfg: &BenchConfig,
    constants: &ProblemConstants,
    components: usize,
    gamma: f64,
    x0: &[f64],
    reference: &Reference,
) -> Result<ResolvedAlgorithm, BenchError> {
    let delta0 = |given: Option<f64>| -> Result<f64, BenchError> {
        match (given, &reference.x_star) {
            (Some(v), _) => Ok(v),
            (None, Some(xs)) => Ok(math::dist_sq(x0, xs).max(f64::MIN_POSITIVE)),
            (None, None) => Err(BenchError::Config("delta0 needs a value or a reference point".into())),
        }
    };
    let resolved = match &cfg.algorithm {
        AlgorithmSpec::Ssqp { schedule } => {
            let schedule = match *schedule {
                SsqpScheduleSpec::ConvexFixedHorizon { delta0: d0, sigma, smoothness } => {
                    SsqpSchedule::ConvexFixedHorizon {
                        horizon: cfg.horizon().unwrap_or(0),
                        delta0: delta0(d0)?,
                        sigma: sigma.unwrap_or(constants.gradient_noise),
                        smoothness: smoothness.smoothness(constants, gamma),
                    }
                }
                SsqpScheduleSpec::ConvexAnytime { delta0: d0, sigma, smoothness } => SsqpSchedule::ConvexAnytime {
                    delta0: delta0(d0)?,
                    sigma: sigma.unwrap_or(constants.gradient_noise),
                    smoothness: smoothness.smoothness(constants, gamma),
                },
                SsqpScheduleSpec::StronglyConvex { strong_convexity, smoothness } => SsqpSchedule::StronglyConvex {
                    strong_convexity: strong_convexity.strong_convexity(constants),
                    smoothness: smoothness.smoothness(constants, gamma),
                },
                SsqpScheduleSpec::Constant { step } => SsqpSchedule::Constant { step },
            };
            ResolvedAlgorithm::Ssqp { schedule }
        }
        AlgorithmSpec::SsqpSkip { strong_convexity, smoothness, kickstart, gain } => {
            let schedule = SkipSchedule::new(
                strong_convexity.strong_convexity(constants),
                smoothness.smoothness(constants, gamma),
                *kickstart,
            )?;
            let expected_qmo = cfg.horizon().map(|t| schedule.expected_qmo(t));
            ResolvedAlgorithm::SsqpSkip { schedule, gain: *gain, expected_qmo }
        }
        AlgorithmSpec::Varas { regime, smoothness, strong_convexity } => {
            let mu = match regime {
                VarasRegime::Convex => 0.0,
                VarasRegime::StronglyConvex => strong_convexity.strong_convexity(constants),
            };
            ResolvedAlgorithm::Varas {
                schedule: VarasSchedule::new(components, *regime, smoothness.smoothness(constants, gamma), mu)?,
            }
        }
        AlgorithmSpec::PrimalDual { rule, clip } => {
            ResolvedAlgorithm::PrimalDual { params: PrimalDualParams { rule: *rule, clip: *clip } }
        }
    };
    Ok(resolved)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSummary {
    pub kind: &'static str,
    pub dim: usize,
    pub components: usize,
    pub constraints: usize,
    pub constants: ProblemConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub trace: String,
    pub status: RunStatus,
    pub counters: OracleCounters,
    pub qp_warnings: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

/// Everything needed to interpret and re-run the traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub library_version: &'static str,
    pub config: BenchConfig,
    pub penalty: PenaltyConfig,
    pub algorithm: ResolvedAlgorithm,
    pub problem: ProblemSummary,
    pub reference: Reference,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub directory: PathBuf,
    pub metadata: Metadata,
    pub traces: Vec<Vec<RunTraceRow>>,
}

impl ExperimentOutput {
    pub fn diverged(&self) -> Vec<u64> {
        self.metadata.runs.iter().filter(|r| matches!(r.status, RunStatus::Diverged { .. })).map(|r| r.seed).collect()
    }
}

/// Everything resolved before the first run.
pub struct Prepared {
    pub problem: BuiltProblem,
    pub penalty: PenaltyConfig,
    pub x0: Vec<f64>,
    pub reference: Reference,
    pub algorithm: ResolvedAlgorithm,
}

pub fn prepare(cfg: &BenchConfig) -> Result<Prepared, BenchError> {
    cfg.validate()?;
    let problem = BuiltProblem::build(&cfg.problem)?;
    let penalty = resolve_penalty(&cfg.gamma, &problem)?;
    let x0 = cfg_x0(cfg, &problem)?;
    let reference = resolve_reference(&cfg.reference, &problem, penalty.gamma, &x0)?;
    let p = problem.problem();
    let algorithm = resolve_algorithm(cfg, &p.constants(), p.component_count(), penalty.gamma, &x0, &reference)?;
    Ok(Prepared { problem, penalty, x0, reference, algorithm })
}

fn cfg_x0(cfg: &BenchConfig, problem: &BuiltProblem) -> Result<Vec<f64>, BenchError> {
    problem.initial_point(&cfg.initial_point)
}

pub fn run_config(cfg: &BenchConfig, gamma: f64, seed: u64, x0: &[f64]) -> RunConfig {
    let mut rc = RunConfig::new(gamma, cfg.stop, seed, x0.to_vec());
    rc.batch = cfg.run.batch;
    rc.checkpoint_stride = cfg.checkpoint_stride;
    rc.count_checkpoints = cfg.run.count_checkpoints;
    rc.qp_tol = cfg.run.qp_tol;
    rc.qp_max_sweeps = cfg.run.qp_max_sweeps;
    rc.warm_start = cfg.run.warm_start;
    rc.report_point = cfg.run.report_point;
    rc
}

/// Runs one seed. A zero horizon yields an empty trace without touching the
/// oracles.
pub fn run_seed(cfg: &BenchConfig, prepared: &Prepared, seed: u64) -> Result<RunOutput, BenchError> {
    let rc = run_config(cfg, prepared.penalty.gamma, seed, &prepared.x0);
    if cfg.horizon() == Some(0) {
        return Ok(RunOutput {
            x_last: prepared.x0.clone(),
            x_average: None,
            trace: ssqp_core::algorithms::RunTrace { rows: Vec::new(), status: RunStatus::Completed },
            counters: OracleCounters::default(),
            qp_warnings: 0,
        });
    }
    let wall = WallClock::start();
    let clock: &dyn Clock = if cfg.wall_clock { &wall } else { &NoClock };
    let p = prepared.problem.problem();
    let r = &prepared.reference;
    let out = match &prepared.algorithm {
        ResolvedAlgorithm::Ssqp { schedule } => ssqp_run_with(p, schedule, &rc, r, clock, &mut NoObserver),
        ResolvedAlgorithm::SsqpSkip { schedule, gain, .. } => {
            ssqp_skip_run_with(p, schedule, *gain, &rc, r, clock, &mut NoObserver)
        }
        ResolvedAlgorithm::Varas { schedule } => varas_run_with(p, schedule, &rc, r, clock, &mut NoObserver),
        ResolvedAlgorithm::PrimalDual { params } => primal_dual_run_with(p, params, &rc, r, clock),
    }?;
    Ok(out)
}

fn problem_summary(cfg: &BenchConfig, problem: &dyn ConstrainedProblem) -> ProblemSummary {
    let kind = match cfg.problem {
        ProblemSpec::Regression { .. } => "regression",
        ProblemSpec::Usv { .. } => "usv",
        ProblemSpec::Spectral { .. } => "spectral",
    };
    ProblemSummary {
        kind,
        dim: problem.dim(),
        components: problem.component_count(),
        constraints: problem.constraint_count(),
        constants: problem.constants(),
    }
}

/// Runs every seed into `cfg.output`: one CSV per seed and `metadata.json`.
pub fn run_experiment(cfg: &BenchConfig) -> Result<ExperimentOutput, BenchError> {
    let prepared = prepare(cfg)?;
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    let mut traces = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let started = Instant::now();
        let out = run_seed(cfg, &prepared, seed)?;
        let name = trace_file_name(seed);
        trace_io::write_trace_file(&dir.join(&name), &out.trace.rows)?;
        if let RunStatus::Diverged { iteration } = out.trace.status {
            log::warn!("seed {seed} diverged at iteration {iteration}");
        }
        runs.push(RunRecord {
            seed,
            trace: name,
            status: out.trace.status,
            counters: out.counters,
            qp_warnings: out.qp_warnings,
            wall_seconds: cfg.wall_clock.then(|| started.elapsed().as_secs_f64()),
        });
        traces.push(out.trace.rows);
    }
    let metadata = Metadata {
        library_version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        penalty: prepared.penalty,
        algorithm: prepared.algorithm,
        problem: problem_summary(cfg, prepared.problem.problem()),
        reference: prepared.reference,
        runs,
    };
    write_metadata(&dir.join(METADATA_FILE), &metadata)?;
    Ok(ExperimentOutput { directory: dir, metadata, traces })
}

fn write_metadata(path: &Path, metadata: &Metadata) -> Result<(), BenchError> {
    let mut text = serde_json::to_string_pretty(metadata).map_err(|e| BenchError::Trace(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

/// Computes the reference point and value alone.
pub fn compute_reference(cfg: &BenchConfig) -> Result<(PenaltyConfig, Reference), BenchError> {
    cfg.validate()?;
    let problem = BuiltProblem::build(&cfg.problem)?;
    let penalty = resolve_penalty(&cfg.gamma, &problem)?;
    let x0 = cfg_x0(cfg, &problem)?;
    let spec = match cfg.reference {
        ReferenceSpec::None => ReferenceSpec::Solve,
        ref other => other.clone(),
    };
    let reference = resolve_reference(&spec, &problem, penalty.gamma, &x0)?;
    Ok((penalty, reference))
}
